#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsc/losses.hpp"
#include "dsc/networks.hpp"
#include "dsc/pairing.hpp"
#include "dsc/scaler.hpp"
#include "dsc/synthetic.hpp"
#include "dsc/training.hpp"

namespace dsc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// "path:variable" reference into a gridded file.
struct VarRef {
    std::string path;
    std::string var;
};

struct DataPaths {
    std::optional<VarRef> predictand_hr;
    std::optional<VarRef> predictand_lr;
    std::vector<VarRef> predictors;
    std::vector<VarRef> statics;
};

/// Everything needed to run an experiment: data (real paths or synthetic
/// generator parameters), pairing regime, architecture, training and loss
/// settings. Parsed from a flat "key = value" text file with dotted keys.
struct ExperimentConfig {
    std::string label = "model";
    std::uint64_t seed = 0;
    double holdout_fraction = 0.2;
    ScalerKind scaler = ScalerKind::Standard;

    std::optional<SyntheticParams> synthetic;
    DataPaths data;

    PairingConfig pairing;

    // architecture (grid dims are derived from the data at prepare time)
    Backbone backbone = Backbone::Resnet;
    int n_blocks = 6;
    int filters = 32;
    int kernel = 3;
    bool use_lcb = true;
    double dropout_rate = 0.0;
    bool attention = false;
    nn::NormKind normalization = nn::NormKind::None;
    int lcb_bottleneck = 8;
    int lcb_out_channels = 8;
    int dense_growth = 12;
    int dense_layers = 2;

    bool adversarial = false;
    TrainConfig train;

    /// Builds the spec for given input grid dims and channel counts.
    ArchitectureSpec make_spec(int lr_y, int lr_x, int n_predictors, int n_statics) const;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig parse(const std::string& text);
};

}  // namespace dsc
