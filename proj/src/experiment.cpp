#include "dsc/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dsc/datacube.hpp"
#include "dsc/gridfile.hpp"
#include "dsc/synthetic.hpp"

namespace dsc {

namespace {

std::string spec_hash(const ArchitectureSpec& spec) {
    const std::string text = spec.to_text();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

Tensor time_slice(const DataCube& cube, int t) {
    Tensor out({cube.n_y(), cube.n_x()});
    for (int i = 0; i < cube.n_y(); ++i)
        for (int j = 0; j < cube.n_x(); ++j) out.at(i, j) = cube.values.at(t, i, j);
    return out;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    DataPaths paths = cfg.data;
    if (cfg.synthetic && !paths.predictand_hr) {
        SyntheticParams sp = *cfg.synthetic;
        sp.seed = cfg.seed;
        const SyntheticDataset files = gen_synthetic(sp, out_dir + "/data");
        paths.predictand_hr = VarRef{files.predictand_hr, "field"};
        if (cfg.pairing.regime == Regime::MOS)
            paths.predictand_lr = VarRef{files.predictand_lr, "field"};
        paths.predictors.clear();
        for (int n = 0; n < sp.n_predictors; ++n)
            paths.predictors.push_back(VarRef{files.predictors, "predictor" + std::to_string(n + 1)});
        paths.statics = {VarRef{files.statics, "topography"}, VarRef{files.statics, "landsea"}};
    }

    DataCube hr = load_cube(paths.predictand_hr->path, paths.predictand_hr->var);
    std::optional<DataCube> lr;
    if (paths.predictand_lr) lr = load_cube(paths.predictand_lr->path, paths.predictand_lr->var);

    std::vector<DataCube> predictors;
    for (const auto& ref : paths.predictors) predictors.push_back(load_cube(ref.path, ref.var));

    StaticFieldSet statics;
    if (!paths.statics.empty()) {
        // All static variables must live in one file on the HR grid.
        std::vector<std::string> names;
        for (const auto& ref : paths.statics) names.push_back(ref.var);
        statics = load_statics(paths.statics.front().path, names);
    } else {
        statics.fields = Tensor({hr.n_y(), hr.n_x(), 0});
    }

    auto [hr_train, hr_hold] = temporal_split(hr, cfg.holdout_fraction);

    PreparedData out;
    out.n_predictors = static_cast<int>(predictors.size());
    out.n_statics = statics.n_channel();
    out.hr_lats = hr.lats;
    out.hr_lons = hr.lons;
    out.holdout_times = hr_hold.times;

    // Scalers are fitted on the training period only.
    out.predictand_scaler = ScalerState::fit(cfg.scaler, hr_train);
    out.predictand_scaler.save(out_dir + "/scaler.txt");

    DataCube hr_train_s = out.predictand_scaler.transform(hr_train);
    DataCube hr_hold_s = out.predictand_scaler.transform(hr_hold);
    out.scaled_data_range = hr_train_s.values.max_finite() - hr_train_s.values.min_finite();
    out.physical_data_range = hr_hold.values.max_finite() - hr_hold.values.min_finite();

    std::optional<DataCube> lr_train_s, lr_hold_s, lr_hold_raw;
    if (lr) {
        auto [lr_train, lr_hold] = temporal_split(*lr, cfg.holdout_fraction);
        lr_hold_raw = lr_hold;
        lr_train_s = out.predictand_scaler.transform(lr_train);
        lr_hold_s = out.predictand_scaler.transform(lr_hold);
    }

    std::vector<DataCube> pred_train_s, pred_hold_s;
    for (const auto& p : predictors) {
        auto [p_train, p_hold] = temporal_split(p, cfg.holdout_fraction);
        const ScalerState ps = ScalerState::fit(cfg.scaler, p_train);
        pred_train_s.push_back(ps.transform(p_train));
        pred_hold_s.push_back(ps.transform(p_hold));
    }

    // Statics: per-channel min-max onto [0,1] (constant channels pass through).
    for (int c = 0; c < statics.n_channel(); ++c) {
        double mn = std::numeric_limits<double>::infinity(), mx = -mn;
        for (int i = 0; i < statics.n_y(); ++i)
            for (int j = 0; j < statics.n_x(); ++j) {
                const double v = statics.fields.at(i, j, c);
                if (std::isfinite(v)) {
                    mn = std::min(mn, v);
                    mx = std::max(mx, v);
                }
            }
        if (mx > mn)
            for (int i = 0; i < statics.n_y(); ++i)
                for (int j = 0; j < statics.n_x(); ++j)
                    statics.fields.at(i, j, c) = (statics.fields.at(i, j, c) - mn) / (mx - mn);
    }

    const std::optional<DataCube> no_lr;
    out.train_samples = make_pairs(hr_train_s, lr ? lr_train_s : no_lr, pred_train_s, statics,
                                   cfg.pairing);
    out.holdout_samples =
        make_pairs(hr_hold_s, lr ? lr_hold_s : no_lr, pred_hold_s, statics, cfg.pairing);

    // Physical-unit targets, masks and the bicubic reference per holdout
    // sample (aligned through time_index; all-NaN samples were dropped).
    const int y_hr = hr.n_y(), x_hr = hr.n_x();
    for (const auto& sp : out.holdout_samples) {
        const int t = sp.time_index;
        Tensor target({y_hr, x_hr, 1});
        for (int i = 0; i < y_hr; ++i)
            for (int j = 0; j < x_hr; ++j) target.at(i, j, 0) = hr_hold.values.at(t, i, j);
        ValidityMask vm = mask_from_nans(target);
        for (std::int64_t i = 0; i < target.numel(); ++i)
            if (vm.mask[i] == 0.0) target[i] = 0.0;
        out.holdout_targets_physical.push_back(std::move(target));
        out.holdout_masks.push_back(std::move(vm.mask));
        out.holdout_time_indices.push_back(t);

        Tensor lr_raw = lr_hold_raw ? time_slice(*lr_hold_raw, t)
                                    : coarsen(time_slice(hr_hold, t), cfg.pairing.scale);
        out.baseline_bicubic.push_back(resize_bicubic(lr_raw, y_hr, x_hr));
    }
    return out;
}

TrainReport train_model(Model& model, const ExperimentConfig& cfg, const PreparedData& data,
                        const std::string& out_dir, bool resume) {
    TrainConfig tc = cfg.train;
    if (tc.loss.data_range <= 0.0) tc.loss.data_range = data.scaled_data_range;

    TrainReport report;
    if (cfg.adversarial) {
        Discriminator disc(model.spec(), cfg.seed);
        report = cgan_train(model, disc, data.train_samples, tc, out_dir, resume);
    } else {
        report = supervised_train(model, data.train_samples, tc, out_dir, resume);
    }
    report.save(out_dir + "/train_log.txt");
    return report;
}

std::vector<Tensor> predict_holdout(Model& model, const PreparedData& data) {
    std::vector<Tensor> preds;
    preds.reserve(data.holdout_samples.size());
    for (const auto& sp : data.holdout_samples)
        preds.push_back(predict(model, sp, data.predictand_scaler));
    return preds;
}

namespace {

void write_predictions(const std::string& path, const std::vector<Tensor>& preds,
                       const PreparedData& data, const Model& model,
                       const std::string& checkpoint_dir) {
    if (preds.empty()) return;
    DataCube cube;
    cube.name = "prediction";
    cube.units = "a.u.";
    cube.lats = data.hr_lats;
    cube.lons = data.hr_lons;
    const int y = preds[0].dim(0), x = preds[0].dim(1);
    cube.values = Tensor({static_cast<int>(preds.size()), y, x});
    for (std::size_t k = 0; k < preds.size(); ++k) {
        cube.times.push_back(data.holdout_times[static_cast<std::size_t>(
            data.holdout_time_indices[k])]);
        for (int i = 0; i < y; ++i)
            for (int j = 0; j < x; ++j) cube.values.at(static_cast<int>(k), i, j) = preds[k].at(i, j, 0);
    }
    std::ostringstream scaler_txt;
    scaler_txt << to_string(data.predictand_scaler.kind) << " mean=" << data.predictand_scaler.mean
               << " std=" << data.predictand_scaler.std << " min=" << data.predictand_scaler.min
               << " max=" << data.predictand_scaler.max;
    save_cube(path, cube,
              {{"spec_hash", spec_hash(model.spec())},
               {"checkpoint", checkpoint_dir},
               {"scaler", scaler_txt.str()}});
}

}  // namespace

EvalReport evaluate_model(Model& model, const ExperimentConfig& cfg, const PreparedData& data,
                          const std::string& out_dir) {
    const std::vector<Tensor> preds = predict_holdout(model, data);
    // The SSIM window shrinks (to an odd size) on grids below 11 cells.
    int window = std::min({11, model.spec().hr_y(), model.spec().hr_x()});
    if (window % 2 == 0) --window;
    EvalReport report =
        evaluate_holdout(preds, data.holdout_targets_physical, data.holdout_masks,
                         data.holdout_time_indices, data.physical_data_range, window);
    report.save(out_dir + "/eval");
    {
        std::ofstream label_out(out_dir + "/label.txt");
        label_out << cfg.label << "\n";
    }

    write_predictions(out_dir + "/predictions.grd", preds, data, model, out_dir + "/checkpoint");

    PlotRequest req;
    req.label = cfg.label;
    req.report = &report;
    if (!preds.empty()) {
        auto squeeze = [](const Tensor& f) {
            Tensor out({f.dim(0), f.dim(1)});
            out.data = f.data;
            return out;
        };
        req.sample_pred = squeeze(preds[0]);
        req.sample_target = squeeze(data.holdout_targets_physical[0]);
        req.sample_baseline = data.baseline_bicubic[0];
    }
    emit_plots({req}, out_dir + "/plots");
    return report;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                bool resume) {
    PreparedData data = prepare_data(cfg, out_dir);
    if (data.train_samples.empty()) throw std::runtime_error("no training samples");

    const Tensor& first = data.train_samples[0].lr_input;
    const bool temporal = cfg.pairing.sample_kind == SampleKind::Spatiotemporal;
    const int lr_y = temporal ? first.dim(1) : first.dim(0);
    const int lr_x = temporal ? first.dim(2) : first.dim(1);
    ArchitectureSpec spec = cfg.make_spec(lr_y, lr_x, data.n_predictors, data.n_statics);

    Model model(spec, cfg.seed);
    if (resume) load_params(out_dir + "/checkpoint/params.bin", model.params());

    ExperimentResult result;
    result.out_dir = out_dir;
    result.train_report = train_model(model, cfg, data, out_dir, resume);
    result.checkpoint_dir = result.train_report.final_checkpoint;
    result.eval_report = evaluate_model(model, cfg, data, out_dir);

    // Bicubic reference skill over the same holdout.
    double sq = 0.0;
    std::int64_t n = 0;
    for (std::size_t k = 0; k < data.baseline_bicubic.size(); ++k) {
        const Tensor& base = data.baseline_bicubic[k];
        const Tensor& target = data.holdout_targets_physical[k];
        const Tensor& mask = data.holdout_masks[k];
        for (int i = 0; i < base.dim(0); ++i)
            for (int j = 0; j < base.dim(1); ++j) {
                if (mask.at(i, j, 0) == 0.0) continue;
                const double d = base.at(i, j) - target.at(i, j, 0);
                sq += d * d;
                ++n;
            }
    }
    result.baseline_rmse_mean = n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    {
        std::ofstream out(out_dir + "/eval/baseline.txt");
        out.precision(10);
        out << "bicubic_rmse " << result.baseline_rmse_mean << "\n";
    }
    return result;
}

}  // namespace dsc
