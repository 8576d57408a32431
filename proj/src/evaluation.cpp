#include "dsc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dsc/gridfile.hpp"
#include "dsc/image.hpp"
#include "dsc/losses.hpp"

namespace dsc {

namespace {

/// Treats (y, x) and (y, x, 1) interchangeably.
const double* flat(const Tensor& t) { return t.data.data(); }

std::pair<int, int> field_dims(const Tensor& t) {
    if (t.rank() == 2) return {t.dim(0), t.dim(1)};
    if (t.rank() == 3 && t.dim(2) == 1) return {t.dim(0), t.dim(1)};
    throw std::runtime_error("metrics expect (y,x) or (y,x,1) fields");
}

Tensor as_rank3(const Tensor& t) {
    if (t.rank() == 3) return t;
    Tensor out({t.dim(0), t.dim(1), 1});
    out.data = t.data;
    return out;
}

MetricSummary summary_of(const std::vector<double>& xs) {
    MetricSummary s;
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double v : xs) sum += v;
    s.mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double v : xs) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size()));
    return s;
}

double psnr_from_mse(double mse, double data_range) {
    const double floor_mse = data_range * data_range * std::pow(10.0, -9.9);
    if (mse < floor_mse) return 99.0;
    return 10.0 * std::log10(data_range * data_range / mse);
}

}  // namespace

SampleMetrics metrics_per_sample(const Tensor& pred, const Tensor& target, const Tensor& mask,
                                 double data_range, int ssim_window) {
    const auto [y, x] = field_dims(pred);
    const auto [ty, tx] = field_dims(target);
    if (y != ty || x != tx || pred.numel() != target.numel() || mask.numel() != pred.numel())
        throw std::runtime_error("metrics: shape mismatch");

    const double* p = flat(pred);
    const double* t = flat(target);
    const double* m = flat(mask);
    const std::int64_t n = pred.numel();

    double abs_sum = 0.0, sq_sum = 0.0;
    double sp = 0.0, st = 0.0, spp = 0.0, stt = 0.0, spt = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (m[i] == 0.0) continue;
        const double d = p[i] - t[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
        sp += p[i];
        st += t[i];
        spp += p[i] * p[i];
        stt += t[i] * t[i];
        spt += p[i] * t[i];
        ++count;
    }
    if (count == 0) throw std::runtime_error("no valid cells");

    SampleMetrics out;
    const double mse = sq_sum / static_cast<double>(count);
    out.mae = abs_sum / static_cast<double>(count);
    out.rmse = std::sqrt(mse);
    out.psnr = psnr_from_mse(mse, data_range);

    const double cn = static_cast<double>(count);
    const double cov = spt - sp * st / cn;
    const double var_p = spp - sp * sp / cn;
    const double var_t = stt - st * st / cn;
    if (count < 2 || var_p <= 0.0 || var_t <= 0.0) {
        out.pearson = std::nan("");
        out.pearson_defined = false;
    } else {
        out.pearson = cov / std::sqrt(var_p * var_t);
    }

    LossSpec spec;
    spec.ssim_window = ssim_window;
    spec.data_range = data_range;
    out.ssim = losses::ssim_value(as_rank3(pred), as_rank3(target), spec);
    return out;
}

std::pair<Tensor, Tensor> metric_maps(const std::vector<Tensor>& preds,
                                      const std::vector<Tensor>& targets) {
    if (preds.size() != targets.size()) throw std::runtime_error("metric maps: size mismatch");
    if (preds.size() < 2) throw std::runtime_error("insufficient samples for maps");
    const auto [y, x] = field_dims(preds[0]);

    Tensor pearson_map({y, x});
    Tensor rmse_map({y, x});
    const std::size_t n = preds.size();
    for (int i = 0; i < y; ++i)
        for (int j = 0; j < x; ++j) {
            double sp = 0, st = 0, spp = 0, stt = 0, spt = 0, sq = 0;
            std::int64_t count = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const double pv = flat(preds[k])[static_cast<std::int64_t>(i) * x + j];
                const double tv = flat(targets[k])[static_cast<std::int64_t>(i) * x + j];
                if (!std::isfinite(pv) || !std::isfinite(tv)) continue;
                sp += pv;
                st += tv;
                spp += pv * pv;
                stt += tv * tv;
                spt += pv * tv;
                sq += (pv - tv) * (pv - tv);
                ++count;
            }
            if (count == 0) {
                rmse_map.at(i, j) = std::nan("");
                pearson_map.at(i, j) = std::nan("");
                continue;
            }
            rmse_map.at(i, j) = std::sqrt(sq / static_cast<double>(count));
            const double cn = static_cast<double>(count);
            const double var_p = spp - sp * sp / cn;
            const double var_t = stt - st * st / cn;
            if (count < 2 || var_p <= 0.0 || var_t <= 0.0)
                pearson_map.at(i, j) = std::nan("");
            else
                pearson_map.at(i, j) = (spt - sp * st / cn) / std::sqrt(var_p * var_t);
        }
    return {pearson_map, rmse_map};
}

EvalReport evaluate_holdout(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets,
                            const std::vector<Tensor>& masks, const std::vector<int>& time_indices,
                            double data_range, int ssim_window) {
    if (preds.empty()) throw std::runtime_error("nothing to evaluate");
    EvalReport report;
    report.data_range = data_range;

    std::vector<double> maes, rmses, pearsons, ssims, psnrs;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        SampleMetrics m =
            metrics_per_sample(preds[k], targets[k], masks[k], data_range, ssim_window);
        m.time_index = time_indices[k];
        maes.push_back(m.mae);
        rmses.push_back(m.rmse);
        ssims.push_back(m.ssim);
        psnrs.push_back(m.psnr);
        if (m.pearson_defined)
            pearsons.push_back(m.pearson);
        else
            ++report.undefined_pearson;
        report.per_sample.push_back(m);
    }
    report.mae = summary_of(maes);
    report.rmse = summary_of(rmses);
    report.pearson = summary_of(pearsons);
    report.ssim = summary_of(ssims);
    report.psnr = summary_of(psnrs);

    if (preds.size() >= 2) {
        auto [pm, rm] = metric_maps(preds, targets);
        report.pearson_map = std::move(pm);
        report.rmse_map = std::move(rm);
    }
    return report;
}

void EvalReport::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir + "/per_sample.txt");
        out << "# time_index mae rmse pearson ssim psnr\n";
        out.precision(10);
        for (const auto& m : per_sample)
            out << m.time_index << " " << m.mae << " " << m.rmse << " " << m.pearson << " "
                << m.ssim << " " << m.psnr << "\n";
    }
    {
        std::ofstream out(dir + "/report.txt");
        out << std::fixed << std::setprecision(2);
        out << "metric mean std\n";
        out << "MAE " << mae.mean << " " << mae.std << "\n";
        out << "RMSE " << rmse.mean << " " << rmse.std << "\n";
        out << "PearCorr " << pearson.mean << " " << pearson.std << "\n";
        out << "SSIM " << ssim.mean << " " << ssim.std << "\n";
        out << "PSNR " << psnr.mean << " " << psnr.std << "\n";
        out << "undefined_pearson_samples " << undefined_pearson << "\n";
        out << "data_range " << std::setprecision(6) << data_range << "\n";
    }
    if (rmse_map.numel() > 0) {
        GridFile f;
        f.dims["lat"] = rmse_map.dim(0);
        f.dims["lon"] = rmse_map.dim(1);
        f.add_var("rmse", {"lat", "lon"}, rmse_map);
        f.add_var("pearson", {"lat", "lon"}, pearson_map);
        f.write(dir + "/metric_maps.grd");
    }
}

EvalReport EvalReport::load(const std::string& dir) {
    std::ifstream in(dir + "/per_sample.txt");
    if (!in) throw std::runtime_error("cannot open evaluation report: " + dir);
    std::vector<Tensor> dummy;
    EvalReport report;
    std::vector<double> maes, rmses, pearsons, ssims, psnrs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        SampleMetrics m;
        if (!(ls >> m.time_index >> m.mae >> m.rmse >> m.pearson >> m.ssim >> m.psnr)) continue;
        m.pearson_defined = std::isfinite(m.pearson);
        report.per_sample.push_back(m);
        maes.push_back(m.mae);
        rmses.push_back(m.rmse);
        ssims.push_back(m.ssim);
        psnrs.push_back(m.psnr);
        if (m.pearson_defined)
            pearsons.push_back(m.pearson);
        else
            ++report.undefined_pearson;
    }
    report.mae = summary_of(maes);
    report.rmse = summary_of(rmses);
    report.pearson = summary_of(pearsons);
    report.ssim = summary_of(ssims);
    report.psnr = summary_of(psnrs);

    if (std::filesystem::exists(dir + "/metric_maps.grd")) {
        GridFile f = GridFile::read(dir + "/metric_maps.grd");
        if (const GridVar* v = f.find("rmse")) report.rmse_map = v->data;
        if (const GridVar* v = f.find("pearson")) report.pearson_map = v->data;
    }
    std::ifstream rin(dir + "/report.txt");
    while (std::getline(rin, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "data_range") ls >> report.data_range;
    }
    return report;
}

std::string summarize(const std::vector<std::pair<std::string, const EvalReport*>>& reports) {
    std::vector<std::pair<std::string, const EvalReport*>> rows = reports;
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "Model | MAE | RMSE | PearCorr | SSIM | PSNR\n";
    for (const auto& [label, r] : rows) {
        out << label;
        auto cell = [&](const MetricSummary& s) {
            out << " | " << s.mean << " ± " << s.std;
        };
        cell(r->mae);
        cell(r->rmse);
        cell(r->pearson);
        cell(r->ssim);
        cell(r->psnr);
        out << "\n";
    }
    return out.str();
}

void emit_plots(const std::vector<PlotRequest>& requests, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    // One shared color range across every RMSE panel.
    double rmse_max = 0.0;
    bool any_rmse = false;
    for (const auto& req : requests) {
        if (!req.report || req.report->rmse_map.numel() == 0) continue;
        const double mx = req.report->rmse_map.max_finite();
        if (std::isfinite(mx)) {
            rmse_max = std::max(rmse_max, mx);
            any_rmse = true;
        }
    }

    std::ofstream meta(out_dir + "/plots_meta.txt");
    meta.precision(10);
    if (any_rmse) meta << "shared_rmse_range = 0 " << rmse_max << "\n";

    for (const auto& req : requests) {
        if (!req.report || req.report->rmse_map.numel() == 0 ||
        !std::isfinite(req.report->rmse_map.max_finite())) {
            std::cerr << "warning: empty metric maps for " << req.label << ", no plot written\n";
            continue;
        }
        const std::string rmse_file = req.label + "_rmse.png";
        write_field_png(out_dir + "/" + rmse_file, req.report->rmse_map, 0.0, rmse_max);
        meta << rmse_file << " range = 0 " << rmse_max << "\n";

        const std::string corr_file = req.label + "_pearson.png";
        write_field_png(out_dir + "/" + corr_file, req.report->pearson_map, -1.0, 1.0);
        meta << corr_file << " range = -1 1\n";

        if (req.sample_pred.numel() > 0) {
            // Gallery panels share the reference field's dynamic range.
            const double vmin = req.sample_target.min_finite();
            const double vmax = req.sample_target.max_finite();
            write_field_png(out_dir + "/" + req.label + "_sample.png", req.sample_pred, vmin, vmax);
            write_field_png(out_dir + "/" + req.label + "_sample_reference.png", req.sample_target,
                            vmin, vmax);
            if (req.sample_baseline.numel() > 0)
                write_field_png(out_dir + "/" + req.label + "_sample_bicubic.png",
                                req.sample_baseline, vmin, vmax);
        }
    }
}

}  // namespace dsc
