#include "dsc/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace dsc {

Tensor coarsen(const Tensor& field, int scale) {
    if (scale < 1) throw std::runtime_error("incompatible scale");
    const bool has_c = field.rank() == 3;
    if (field.rank() != 2 && field.rank() != 3) throw std::runtime_error("coarsen expects rank 2 or 3");
    const int y = field.dim(0), x = field.dim(1), c = has_c ? field.dim(2) : 1;
    if (y % scale != 0 || x % scale != 0) throw std::runtime_error("incompatible scale");

    const int oy = y / scale, ox = x / scale;
    Tensor out(has_c ? std::vector<int>{oy, ox, c} : std::vector<int>{oy, ox});
    for (int i = 0; i < oy; ++i)
        for (int j = 0; j < ox; ++j)
            for (int ch = 0; ch < c; ++ch) {
                double sum = 0.0;
                int n = 0;
                for (int di = 0; di < scale; ++di)
                    for (int dj = 0; dj < scale; ++dj) {
                        const double v = has_c ? field.at(i * scale + di, j * scale + dj, ch)
                                               : field.at(i * scale + di, j * scale + dj);
                        if (!std::isnan(v)) {
                            sum += v;
                            ++n;
                        }
                    }
                const double m = n > 0 ? sum / n : std::nan("");
                if (has_c)
                    out.at(i, j, ch) = m;
                else
                    out.at(i, j) = m;
            }
    return out;
}

namespace {

/// Catmull-Rom kernel (Keys, a = -0.5).
double cubic_weight(double t) {
    t = std::abs(t);
    if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

}  // namespace

Tensor resize_bicubic(const Tensor& field, int out_y, int out_x) {
    const bool has_c = field.rank() == 3;
    if (field.rank() != 2 && field.rank() != 3)
        throw std::runtime_error("resize expects rank 2 or 3");
    const int y = field.dim(0), x = field.dim(1), c = has_c ? field.dim(2) : 1;

    Tensor out(has_c ? std::vector<int>{out_y, out_x, c} : std::vector<int>{out_y, out_x});
    const double sy = static_cast<double>(y) / out_y;
    const double sx = static_cast<double>(x) / out_x;
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };

    for (int i = 0; i < out_y; ++i) {
        const double fy = (i + 0.5) * sy - 0.5;
        const int iy = static_cast<int>(std::floor(fy));
        for (int j = 0; j < out_x; ++j) {
            const double fx = (j + 0.5) * sx - 0.5;
            const int ix = static_cast<int>(std::floor(fx));
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0, wsum = 0.0;
                for (int di = -1; di <= 2; ++di) {
                    const double wy = cubic_weight(fy - (iy + di));
                    for (int dj = -1; dj <= 2; ++dj) {
                        const double w = wy * cubic_weight(fx - (ix + dj));
                        const int si = clampi(iy + di, y - 1);
                        const int sj = clampi(ix + dj, x - 1);
                        const double v = has_c ? field.at(si, sj, ch) : field.at(si, sj);
                        acc += w * v;
                        wsum += w;
                    }
                }
                const double v = acc / wsum;
                if (has_c)
                    out.at(i, j, ch) = v;
                else
                    out.at(i, j) = v;
            }
        }
    }
    return out;
}

ValidityMask mask_from_nans(const Tensor& hr_target) {
    ValidityMask vm;
    vm.mask = Tensor(hr_target.shape);
    for (std::int64_t i = 0; i < hr_target.numel(); ++i) {
        const bool ok = std::isfinite(hr_target[i]);
        vm.mask[i] = ok ? 1.0 : 0.0;
        if (ok) ++vm.valid_cells;
    }
    vm.all_invalid = (vm.valid_cells == 0);
    return vm;
}

namespace {

Tensor slice_time(const DataCube& cube, int t) {
    Tensor out({cube.n_y(), cube.n_x()});
    for (int i = 0; i < cube.n_y(); ++i)
        for (int j = 0; j < cube.n_x(); ++j) out.at(i, j) = cube.values.at(t, i, j);
    return out;
}

void check_alignment(const DataCube& a, const DataCube& b) {
    if (a.n_time() != b.n_time()) throw std::runtime_error("unaligned cubes");
    for (int t = 0; t < a.n_time(); ++t)
        if (a.times[t] != b.times[t]) throw std::runtime_error("unaligned cubes");
}

/// Stacks [predictand, predictors...] at one time step into (y, x, C) and
/// zero-fills NaN cells (inputs are assumed already scaled, so zero sits at
/// the distribution center).
Tensor stack_input(const Tensor& predictand, const std::vector<DataCube>& predictors, int t) {
    const int y = predictand.dim(0), x = predictand.dim(1);
    const int nc = 1 + static_cast<int>(predictors.size());
    Tensor out({y, x, nc});
    for (int i = 0; i < y; ++i)
        for (int j = 0; j < x; ++j) {
            const double v = predictand.at(i, j);
            out.at(i, j, 0) = std::isfinite(v) ? v : 0.0;
            for (std::size_t p = 0; p < predictors.size(); ++p) {
                const double w = predictors[p].values.at(t, i, j);
                out.at(i, j, 1 + static_cast<int>(p)) = std::isfinite(w) ? w : 0.0;
            }
        }
    return out;
}

}  // namespace

std::vector<SamplePair> make_pairs(const DataCube& predictand_hr,
                                   const std::optional<DataCube>& predictand_lr,
                                   const std::vector<DataCube>& predictors,
                                   const StaticFieldSet& statics, const PairingConfig& cfg) {
    const int y_hr = predictand_hr.n_y(), x_hr = predictand_hr.n_x();
    if (cfg.scale < 2) throw std::runtime_error("invalid scale");
    if (y_hr % cfg.scale != 0 || x_hr % cfg.scale != 0) throw std::runtime_error("incompatible scale");
    if (statics.n_y() != y_hr || statics.n_x() != x_hr)
        throw std::runtime_error("static grid mismatch");

    if (cfg.regime == Regime::PerfectProg && predictand_lr.has_value())
        throw std::runtime_error("conflicting inputs");
    if (cfg.regime == Regime::MOS && !predictand_lr.has_value())
        throw std::runtime_error("MOS requires a low-resolution predictand");
    if (predictand_lr) check_alignment(predictand_hr, *predictand_lr);

    const bool pin = cfg.upsampling == Upsampling::PIN;
    const int y_in = pin ? y_hr : y_hr / cfg.scale;
    const int x_in = pin ? x_hr : x_hr / cfg.scale;

    if (cfg.regime == Regime::MOS &&
        (predictand_lr->n_y() != y_hr / cfg.scale || predictand_lr->n_x() != x_hr / cfg.scale))
        throw std::runtime_error("low-resolution grid does not match scale");

    // Predictors move onto the network's working grid.
    std::vector<double> grid_lats(predictand_hr.lats);
    std::vector<double> grid_lons(predictand_hr.lons);
    if (!pin) {
        grid_lats.clear();
        grid_lons.clear();
        for (int i = 0; i < y_in; ++i) {
            double s = 0.0;
            for (int d = 0; d < cfg.scale; ++d) s += predictand_hr.lats[i * cfg.scale + d];
            grid_lats.push_back(s / cfg.scale);
        }
        for (int j = 0; j < x_in; ++j) {
            double s = 0.0;
            for (int d = 0; d < cfg.scale; ++d) s += predictand_hr.lons[j * cfg.scale + d];
            grid_lons.push_back(s / cfg.scale);
        }
    }
    std::vector<DataCube> aligned;
    aligned.reserve(predictors.size());
    for (const auto& p : predictors) {
        check_alignment(predictand_hr, p);
        // Coarser predictors rarely cover the HR boundary cells; clamp the
        // regrid targets to the predictor hull so margins take edge values.
        std::vector<double> clamped_lats = grid_lats;
        std::vector<double> clamped_lons = grid_lons;
        for (double& v : clamped_lats) v = std::clamp(v, p.lats.front(), p.lats.back());
        for (double& v : clamped_lons) v = std::clamp(v, p.lons.front(), p.lons.back());
        DataCube r = regrid_bilinear(p, clamped_lats, clamped_lons);
        r.lats = grid_lats;
        r.lons = grid_lons;
        aligned.push_back(std::move(r));
    }

    const int t_total = predictand_hr.n_time();

    // Per-time-step LR input slice (channel 0 of the network input).
    auto lr_slice = [&](int t) -> Tensor {
        Tensor lr;
        if (cfg.regime == Regime::PerfectProg) {
            lr = coarsen(slice_time(predictand_hr, t), cfg.scale);
        } else {
            lr = slice_time(*predictand_lr, t);
        }
        if (pin) lr = resize_bicubic(lr, y_hr, x_hr);
        return lr;
    };

    std::vector<SamplePair> out;
    int dropped = 0;

    auto make_target = [&](int t, SamplePair& sp) -> bool {
        Tensor target({y_hr, x_hr, 1});
        for (int i = 0; i < y_hr; ++i)
            for (int j = 0; j < x_hr; ++j) target.at(i, j, 0) = predictand_hr.values.at(t, i, j);
        ValidityMask vm = mask_from_nans(target);
        if (vm.all_invalid) return false;
        for (std::int64_t i = 0; i < target.numel(); ++i)
            if (vm.mask[i] == 0.0) target[i] = 0.0;
        sp.hr_target = std::move(target);
        sp.mask = std::move(vm.mask);
        sp.valid_cells = vm.valid_cells;
        return true;
    };

    if (cfg.sample_kind == SampleKind::Spatial) {
        for (int t = 0; t < t_total; ++t) {
            SamplePair sp;
            sp.time_index = t;
            sp.statics = statics.fields;
            if (!make_target(t, sp)) {
                ++dropped;
                continue;
            }
            sp.lr_input = stack_input(lr_slice(t), aligned, t);
            out.push_back(std::move(sp));
        }
    } else {
        const int w = cfg.window_length;
        if (w < 1) throw std::runtime_error("invalid window length");
        for (int t = w - 1; t < t_total; ++t) {
            SamplePair sp;
            sp.time_index = t;
            sp.statics = statics.fields;
            if (!make_target(t, sp)) {
                ++dropped;
                continue;
            }
            const int nc = 1 + static_cast<int>(aligned.size());
            sp.lr_input = Tensor({w, y_in, x_in, nc});
            for (int k = 0; k < w; ++k) {
                const Tensor frame = stack_input(lr_slice(t - w + 1 + k), aligned, t - w + 1 + k);
                for (int i = 0; i < y_in; ++i)
                    for (int j = 0; j < x_in; ++j)
                        for (int c = 0; c < nc; ++c) sp.lr_input.at(k, i, j, c) = frame.at(i, j, c);
            }
            out.push_back(std::move(sp));
        }
    }

    if (dropped > 0)
        std::cerr << "warning: dropped " << dropped << " sample(s) with all-NaN targets\n";
    return out;
}

std::string to_string(Regime r) { return r == Regime::MOS ? "MOS" : "PerfectProg"; }
std::string to_string(Upsampling u) {
    switch (u) {
        case Upsampling::PIN: return "PIN";
        case Upsampling::RC: return "RC";
        case Upsampling::DC: return "DC";
        default: return "SPC";
    }
}
std::string to_string(SampleKind k) {
    return k == SampleKind::Spatial ? "spatial" : "spatiotemporal";
}

Regime regime_from_string(const std::string& s) {
    if (s == "MOS" || s == "mos") return Regime::MOS;
    if (s == "PerfectProg" || s == "perfectprog") return Regime::PerfectProg;
    throw std::runtime_error("unknown regime: " + s);
}

Upsampling upsampling_from_string(const std::string& s) {
    if (s == "PIN" || s == "pin") return Upsampling::PIN;
    if (s == "RC" || s == "rc") return Upsampling::RC;
    if (s == "DC" || s == "dc") return Upsampling::DC;
    if (s == "SPC" || s == "spc") return Upsampling::SPC;
    throw std::runtime_error("unknown upsampling: " + s);
}

SampleKind sample_kind_from_string(const std::string& s) {
    if (s == "spatial") return SampleKind::Spatial;
    if (s == "spatiotemporal" || s == "spatiotemp") return SampleKind::Spatiotemporal;
    throw std::runtime_error("unknown sample kind: " + s);
}

}  // namespace dsc
