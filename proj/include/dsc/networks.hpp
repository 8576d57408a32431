#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsc/nn/blocks.hpp"
#include "dsc/nn/tape.hpp"
#include "dsc/pairing.hpp"

namespace dsc {

enum class Backbone { Convnet, Resnet, Densenet, Unet, Convnext };

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

/// Declarative description of a downscaling network. Grid dims are part of
/// the spec because the localized convolutional block learns per-position
/// weights, which pins parameter shapes to a fixed high-resolution grid.
struct ArchitectureSpec {
    Backbone backbone = Backbone::Resnet;
    Upsampling upsampling = Upsampling::SPC;
    SampleKind sample_kind = SampleKind::Spatial;
    int scale = 4;
    int n_blocks = 6;
    int filters = 32;
    int kernel = 3;
    bool use_lcb = true;
    double dropout_rate = 0.0;
    bool attention = false;
    nn::NormKind normalization = nn::NormKind::None;
    int n_static_channels = 0;
    int n_predictor_channels = 0;
    int lr_y = 0;  // input grid dims (already the HR dims under PIN)
    int lr_x = 0;
    int lcb_bottleneck = 8;
    int lcb_out_channels = 8;
    int dense_growth = 12;
    int dense_layers = 2;

    int in_channels() const { return 1 + n_predictor_channels; }
    int hr_y() const { return upsampling == Upsampling::PIN ? lr_y : lr_y * scale; }
    int hr_x() const { return upsampling == Upsampling::PIN ? lr_x : lr_x * scale; }

    /// Error: "invalid spec" with a reason suffix.
    void validate() const;

    std::string to_text() const;
    static ArchitectureSpec from_text(const std::string& text);
};

/// A full downscaling model: backbone section plus three-branch output
/// module. Parameter creation order and initialization are deterministic for
/// a given (spec, seed).
class Model {
public:
    Model(const ArchitectureSpec& spec, std::uint64_t init_seed);

    /// Builds the forward graph for one sample. lr_input is (y, x, C) or
    /// (t, y, x, C); statics is (y_hr, x_hr, C_static) and may be empty when
    /// the spec has no static channels. Error: "sample/spec mismatch".
    nn::NodeId forward_graph(nn::Tape& t, const Tensor& lr_input, const Tensor& statics,
                             const nn::RunCtx& ctx);

    /// Convenience single-sample forward on a private tape.
    Tensor forward(const Tensor& lr_input, const Tensor& statics, nn::Mode mode,
                   Rng* dropout = nullptr);

    /// Backbone section only (blocks, skips and the upsampling stage),
    /// without the output module.
    Tensor backbone_forward(const Tensor& lr_input, nn::Mode mode, Rng* dropout = nullptr);

    const ArchitectureSpec& spec() const { return spec_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

private:
    nn::NodeId backbone_graph(nn::Tape& t, const Tensor& lr_input, const nn::RunCtx& ctx);
    nn::NodeId output_module_graph(nn::Tape& t, nn::NodeId backbone_out, const Tensor& statics,
                                   const nn::RunCtx& ctx);

    ArchitectureSpec spec_;
    nn::ParamStore params_;

    // backbone
    std::optional<nn::ConvLayerParams> stem_;
    std::vector<nn::ConvBlockParams> conv_blocks_;
    std::vector<nn::DenseBlockParams> dense_blocks_;
    std::vector<nn::ConvNextBlockParams> convnext_blocks_;
    std::vector<nn::RecurrentBlockParams> recurrent_blocks_;
    std::optional<nn::ConvLayerParams> dense_transition_;
    std::vector<nn::ConvBlockParams> encoders_;
    std::optional<nn::ConvBlockParams> unet_bottleneck_;
    std::vector<nn::ConvBlockParams> decoders_;
    std::optional<nn::UpsampleParams> upsample_;

    // output module
    std::optional<nn::LocalizedConvParams> lcb_;
    std::optional<nn::ConvBlockParams> static_branch_;
    nn::ConvLayerParams transition_;
    std::optional<nn::ConvBlockParams> head1_;
    std::optional<nn::ConvBlockParams> head2_;
    nn::ConvLayerParams final_conv_;
};

/// Conditional discriminator: strided conv blocks over the HR candidate with
/// the LR input injected by channel concatenation after bilinear resizing,
/// global average pooling and a sigmoid scalar score.
class Discriminator {
public:
    Discriminator(const ArchitectureSpec& spec, std::uint64_t init_seed);

    /// hr_field: (y_hr, x_hr, 1) node. lr_condition: the paired LR input
    /// tensor ((t,y,x,C) inputs condition on their last frame).
    nn::NodeId forward_graph(nn::Tape& t, nn::NodeId hr_field, const Tensor& lr_condition,
                             const nn::RunCtx& ctx);

    double score(const Tensor& hr_field, const Tensor& lr_condition);

    nn::ParamStore& params() { return params_; }
    const ArchitectureSpec& spec() const { return spec_; }

private:
    ArchitectureSpec spec_;
    nn::ParamStore params_;
    std::vector<nn::ConvBlockParams> blocks_;
    nn::ConvLayerParams head_;
};

// ---- checkpointing ----------------------------------------------------------

/// Writes params.bin: a flat binary container with a name -> (shape, offset)
/// index followed by raw float64 tensors. Bit-exact round trip.
void save_params(const std::string& path, const nn::ParamStore& params);

/// Loads into an existing store; every name and shape must match.
/// Errors: "checkpoint corrupt", "spec mismatch".
void load_params(const std::string& path, nn::ParamStore& params);

/// Checkpoint directory: spec.txt + params.bin.
void save_checkpoint(const std::string& dir, const Model& model);
Model load_checkpoint(const std::string& dir);

}  // namespace dsc
