#pragma once

#include <string>
#include <vector>

#include "dsc/tensor.hpp"

namespace dsc {

struct SampleMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double pearson = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
    bool pearson_defined = true;
    int time_index = 0;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
};

/// Per-time-step metric table plus per-gridpoint metric maps over the
/// holdout period.
struct EvalReport {
    std::vector<SampleMetrics> per_sample;
    MetricSummary mae, rmse, pearson, ssim, psnr;
    int undefined_pearson = 0;
    Tensor pearson_map;  // (y, x), NaN where the series is constant
    Tensor rmse_map;     // (y, x)
    double data_range = 1.0;

    void save(const std::string& dir) const;  // report.txt + per_sample.txt + maps
    static EvalReport load(const std::string& dir);
};

/// Metrics for one grid pair. PSNR = 10 log10(range^2 / mse), capped at
/// 99 dB. Pearson over masked cells; constant pred or target flags it
/// undefined. Fields may be (y, x) or (y, x, 1).
SampleMetrics metrics_per_sample(const Tensor& pred, const Tensor& target, const Tensor& mask,
                                 double data_range, int ssim_window = 11);

/// Per-cell Pearson and RMSE over the time axis. Error: "insufficient
/// samples for maps" with fewer than two steps.
std::pair<Tensor, Tensor> metric_maps(const std::vector<Tensor>& preds,
                                      const std::vector<Tensor>& targets);

/// Full holdout evaluation: one metric row per sample, a summary and the
/// metric maps.
EvalReport evaluate_holdout(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets,
                            const std::vector<Tensor>& masks, const std::vector<int>& time_indices,
                            double data_range, int ssim_window = 11);

/// "mean ± std" table (two decimals), one row per model sorted by label.
std::string summarize(const std::vector<std::pair<std::string, const EvalReport*>>& reports);

/// Rendering request for one model's panels.
struct PlotRequest {
    std::string label;
    const EvalReport* report = nullptr;
    Tensor sample_pred;      // one holdout prediction (y, x)
    Tensor sample_target;    // matching reference
    Tensor sample_baseline;  // bicubic resampling of the matching LR input
};

/// Writes pearson/rmse map images and a sample gallery per model. All RMSE
/// maps share one color range; the ranges actually used are recorded in
/// plots_meta.txt next to the images. Empty maps are skipped with a warning.
void emit_plots(const std::vector<PlotRequest>& requests, const std::string& out_dir);

}  // namespace dsc
