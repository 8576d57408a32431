#pragma once

#include <string>
#include <vector>

#include "dsc/config.hpp"
#include "dsc/evaluation.hpp"
#include "dsc/inference.hpp"
#include "dsc/training.hpp"

namespace dsc {

/// Data after loading, splitting, scaling and pairing. Holdout targets and
/// baseline fields are kept in physical units for evaluation.
struct PreparedData {
    std::vector<SamplePair> train_samples;
    std::vector<SamplePair> holdout_samples;
    std::vector<Tensor> holdout_targets_physical;  // (y_hr, x_hr, 1)
    std::vector<Tensor> holdout_masks;
    std::vector<int> holdout_time_indices;
    std::vector<Tensor> baseline_bicubic;  // bicubic resampling of the raw LR input
    ScalerState predictand_scaler;
    double physical_data_range = 1.0;  // holdout target range for PSNR
    double scaled_data_range = 1.0;    // training range after scaling, for SSIM losses
    int n_predictors = 0;
    int n_statics = 0;
    std::vector<double> hr_lats, hr_lons, holdout_times;
};

/// Loads (or synthesizes) the configured dataset, splits, fits scalers on
/// the training period only, and builds sample pairs for both splits.
/// Writes scaler state into out_dir.
PreparedData prepare_data(const ExperimentConfig& cfg, const std::string& out_dir);

struct ExperimentResult {
    TrainReport train_report;
    EvalReport eval_report;
    double baseline_rmse_mean = 0.0;  // bicubic reference over the holdout
    std::string checkpoint_dir;
    std::string out_dir;
};

/// Builds the model from the config, trains it on the prepared training
/// samples, and returns the report. resume restores optimizer state and the
/// epoch counter from out_dir/checkpoint.
TrainReport train_model(Model& model, const ExperimentConfig& cfg, const PreparedData& data,
                        const std::string& out_dir, bool resume);

/// Predicts every holdout sample in physical units.
std::vector<Tensor> predict_holdout(Model& model, const PreparedData& data);

/// Evaluates holdout predictions (physical units) and writes report + maps +
/// plots + predictions file into out_dir.
EvalReport evaluate_model(Model& model, const ExperimentConfig& cfg, const PreparedData& data,
                          const std::string& out_dir);

/// prepare -> train -> evaluate -> report. The full pipeline behind the
/// command-line train subcommand; deterministic for a fixed (config, seed).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                bool resume = false);

}  // namespace dsc
