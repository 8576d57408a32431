#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsc/nn/tape.hpp"
#include "dsc/pairing.hpp"
#include "dsc/rng.hpp"

namespace dsc::nn {

enum class Mode { Train, Infer, MC };
enum class NormKind { None, Batch, Layer };
enum class Activation { ReLU, GELU, Sigmoid, Tanh, Linear };

struct BlockConfig {
    int filters = 32;
    int kernel = 3;
    double dropout_rate = 0.0;
    NormKind normalization = NormKind::None;
    bool attention = false;
    Activation activation = Activation::ReLU;
};

/// Per-forward-pass context. Dropout draws from the supplied stream in Train
/// and MC modes and is disabled in Infer mode.
struct RunCtx {
    Mode mode = Mode::Infer;
    Rng* dropout = nullptr;

    bool stochastic() const { return mode != Mode::Infer; }
};

NodeId apply_activation(Tape& t, NodeId x, Activation a);

// ---- parameter bundles -----------------------------------------------------

struct ConvLayerParams {
    Param* w = nullptr;
    Param* b = nullptr;
};

struct NormParams {
    NormKind kind = NormKind::None;
    Param* gamma = nullptr;
    Param* beta = nullptr;
};

struct AttentionParams {
    ConvLayerParams reduce;  // 1x1, C -> C/r
    ConvLayerParams expand;  // 1x1, C/r -> C
    int reduction = 8;
};

/// The main spatial convolutional block: two same-padded convolutions with
/// interleaved optional normalization, activation and dropout, and an
/// optional channel attention step at the end.
struct ConvBlockParams {
    ConvLayerParams c1, c2;
    NormParams n1, n2;
    std::optional<AttentionParams> attn;
    BlockConfig cfg;
    int in_channels = 0;
};

struct DenseBlockParams {
    std::vector<ConvLayerParams> layers;  // each produces `growth` channels
    BlockConfig cfg;
    int in_channels = 0;
    int growth = 12;
};

struct ConvNextBlockParams {
    Param* dw_w = nullptr;  // (7,7,C) depthwise
    Param* dw_b = nullptr;
    NormParams ln;
    ConvLayerParams pw1;  // 1x1, C -> 4C
    ConvLayerParams pw2;  // 1x1, 4C -> C
    int channels = 0;
};

struct ConvLstmParams {
    Param* w = nullptr;  // (k,k,Cin+Ch,4Ch), gate order [i, f, o, g]
    Param* b = nullptr;  // (4Ch)
    int in_channels = 0;
    int hidden = 0;
    int kernel = 3;
};

/// Recurrent counterpart of the conv block: two stacked ConvLSTM layers.
struct RecurrentBlockParams {
    ConvLstmParams l1, l2;
    double dropout_rate = 0.0;
};

struct LocalizedConvParams {
    ConvLayerParams bottleneck;  // 1x1
    Param* w = nullptr;          // (y,x,k,k,bottleneck,out) untied weights
    Param* b = nullptr;          // (y,x,out)
    int kernel = 3;
};

struct UpsampleParams {
    ConvLayerParams conv;
    Upsampling kind = Upsampling::SPC;
    int scale = 2;
    int out_channels = 0;
};

// ---- builders (create + initialize parameters) ------------------------------

void init_he_normal(Param& w, int fan_in, Rng& rng);

ConvLayerParams make_conv_layer(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch,
                                int kernel, Rng& rng);
NormParams make_norm(ParamStore& ps, const std::string& prefix, NormKind kind, int channels);
AttentionParams make_channel_attention(ParamStore& ps, const std::string& prefix, int channels,
                                       int reduction, Rng& rng);
ConvBlockParams make_conv_block(ParamStore& ps, const std::string& prefix, int in_channels,
                                const BlockConfig& cfg, Rng& rng);
DenseBlockParams make_dense_block(ParamStore& ps, const std::string& prefix, int in_channels,
                                  const BlockConfig& cfg, int growth, int layers, Rng& rng);
ConvNextBlockParams make_convnext_block(ParamStore& ps, const std::string& prefix, int channels,
                                        Rng& rng);
ConvLstmParams make_convlstm(ParamStore& ps, const std::string& prefix, int in_channels, int hidden,
                             int kernel, Rng& rng);
RecurrentBlockParams make_recurrent_block(ParamStore& ps, const std::string& prefix, int in_channels,
                                          const BlockConfig& cfg, Rng& rng);
LocalizedConvParams make_localized_conv_block(ParamStore& ps, const std::string& prefix, int y,
                                              int x, int in_channels, int bottleneck,
                                              int out_channels, int kernel, Rng& rng);
UpsampleParams make_upsample(ParamStore& ps, const std::string& prefix, Upsampling kind, int in_ch,
                             int out_ch, int scale, int kernel, Rng& rng);

// ---- forward builders -------------------------------------------------------

/// Error: "use recurrent variant" on rank-4 input.
NodeId conv_block(Tape& t, NodeId x, const ConvBlockParams& p, const RunCtx& ctx, int stride = 1);

/// output = input + conv_block(input). Error: "skip shape mismatch".
NodeId residual_block(Tape& t, NodeId x, const ConvBlockParams& p, const RunCtx& ctx);

NodeId dense_block(Tape& t, NodeId x, const DenseBlockParams& p, const RunCtx& ctx);

/// Depthwise 7x7 -> layer norm -> 1x1 expand 4x -> GELU -> 1x1 project ->
/// residual addition. Error: "skip shape mismatch".
NodeId convnext_block(Tape& t, NodeId x, const ConvNextBlockParams& p);

/// One ConvLSTM step without peephole terms. Errors: "state shape mismatch".
struct LstmState {
    NodeId h, c;
};
LstmState convlstm_step(Tape& t, NodeId x_t, LstmState prev, const ConvLstmParams& p);

/// Sequence-to-sequence recurrent block (zero initial states).
std::vector<NodeId> recurrent_block(Tape& t, const std::vector<NodeId>& seq,
                                    const RecurrentBlockParams& p, const RunCtx& ctx);

/// Error: "bad reduction ratio" when channels % reduction != 0 (checked at
/// build time).
NodeId channel_attention(Tape& t, NodeId x, const AttentionParams& p);

NodeId localized_conv_block(Tape& t, NodeId x, const LocalizedConvParams& p);

/// SPC: conv to out*s^2 channels then phase shift. DC: zero insertion then
/// conv. RC: bilinear resize then conv.
NodeId upsample(Tape& t, NodeId x, const UpsampleParams& p);

/// Encoder: conv_block then 2x2 max pooling; returns (pooled, skip).
std::pair<NodeId, NodeId> encoder_block(Tape& t, NodeId x, const ConvBlockParams& p,
                                        const RunCtx& ctx);

/// Decoder: bilinear x2, concat skip, conv_block. Error: "skip shape
/// mismatch".
NodeId decoder_block(Tape& t, NodeId x, NodeId skip, const ConvBlockParams& p, const RunCtx& ctx);

}  // namespace dsc::nn
