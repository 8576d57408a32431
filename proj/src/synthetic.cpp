#include "dsc/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "dsc/gridfile.hpp"
#include "dsc/pairing.hpp"
#include "dsc/rng.hpp"

namespace dsc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Mode {
    double ky, kx, phase, omega, amp;
};

std::vector<Mode> draw_modes(Rng& rng, int n, double max_wavenumber) {
    std::vector<Mode> modes;
    for (int k = 0; k < n; ++k) {
        Mode m;
        m.ky = rng.uniform(0.5, max_wavenumber);
        m.kx = rng.uniform(0.5, max_wavenumber);
        m.phase = rng.uniform(0.0, kTwoPi);
        m.omega = rng.uniform(0.02, 0.15);
        m.amp = 0.4 + 0.6 * rng.uniform();
        modes.push_back(m);
    }
    return modes;
}

double eval_modes(const std::vector<Mode>& modes, double fy, double fx, double t) {
    double v = 0.0;
    for (const auto& m : modes)
        v += m.amp * std::sin(kTwoPi * (m.ky * fy + m.kx * fx) + m.phase + m.omega * t);
    return v;
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticParams& p, const std::string& out_dir) {
    if (p.hr_y % p.scale != 0 || p.hr_x % p.scale != 0)
        throw std::runtime_error("incompatible scale");
    std::filesystem::create_directories(out_dir);

    const int Y = p.hr_y, X = p.hr_x, T = p.t_steps;
    std::vector<double> lats(Y), lons(X), times(T);
    for (int i = 0; i < Y; ++i) lats[static_cast<std::size_t>(i)] = 35.0 + 0.1 * i;
    for (int j = 0; j < X; ++j) lons[static_cast<std::size_t>(j)] = -5.0 + 0.1 * j;
    for (int t = 0; t < T; ++t) times[static_cast<std::size_t>(t)] = t;

    // Statics: smooth ramp with fine-scale bumps, and a mask thresholded on it.
    Tensor topo({Y, X});
    Tensor landsea({Y, X});
    for (int i = 0; i < Y; ++i)
        for (int j = 0; j < X; ++j) {
            const double fy = static_cast<double>(i) / Y;
            const double fx = static_cast<double>(j) / X;
            topo.at(i, j) = fy + 0.5 * std::sin(kTwoPi * 5.3 * fy) * std::sin(kTwoPi * 4.7 * fx);
        }
    const double topo_mid = 0.5 * (topo.min_finite() + topo.max_finite());
    for (int i = 0; i < Y; ++i)
        for (int j = 0; j < X; ++j) landsea.at(i, j) = topo.at(i, j) > topo_mid ? 1.0 : 0.0;

    // Large-scale dynamics stay below the LR Nyquist wavenumber; fine-scale
    // structure enters through the topography coupling below, which is what
    // a downscaling model can recover and plain resampling cannot.
    Rng mode_rng = Rng::derive(p.seed, "modes");
    const auto modes = draw_modes(mode_rng, p.n_modes, 2.5);

    Tensor bias({Y, X});
    if (p.location_bias > 0.0) {
        Rng bias_rng = Rng::derive(p.seed, "bias");
        for (double& v : bias.data) v = p.location_bias * bias_rng.normal();
    }

    // High-resolution predictand.
    Rng noise_rng = Rng::derive(p.seed, "noise");
    DataCube hr;
    hr.name = "field";
    hr.units = "a.u.";
    hr.times = times;
    hr.lats = lats;
    hr.lons = lons;
    hr.values = Tensor({T, Y, X});
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < Y; ++i)
            for (int j = 0; j < X; ++j) {
                const double fy = static_cast<double>(i) / Y;
                const double fx = static_cast<double>(j) / X;
                double v = eval_modes(modes, fy, fx, t);
                v += p.topo_coupling * topo.at(i, j);
                v += bias.at(i, j);
                v += p.noise * noise_rng.normal();
                hr.values.at(t, i, j) = v;
            }
    }
    const std::string hr_path = out_dir + "/predictand_hr.grd";
    save_cube(hr_path, hr);

    // Low-resolution counterpart: exact coarsening, optionally perturbed.
    const int ly = Y / p.scale, lx = X / p.scale;
    DataCube lr;
    lr.name = "field";
    lr.units = "a.u.";
    lr.times = times;
    lr.values = Tensor({T, ly, lx});
    lr.lats.resize(static_cast<std::size_t>(ly));
    lr.lons.resize(static_cast<std::size_t>(lx));
    for (int i = 0; i < ly; ++i) {
        double s = 0.0;
        for (int d = 0; d < p.scale; ++d) s += lats[static_cast<std::size_t>(i * p.scale + d)];
        lr.lats[static_cast<std::size_t>(i)] = s / p.scale;
    }
    for (int j = 0; j < lx; ++j) {
        double s = 0.0;
        for (int d = 0; d < p.scale; ++d) s += lons[static_cast<std::size_t>(j * p.scale + d)];
        lr.lons[static_cast<std::size_t>(j)] = s / p.scale;
    }
    Rng perturb_rng = Rng::derive(p.seed, "mos-perturb");
    const auto perturb_modes = draw_modes(perturb_rng, 3, 2.0);
    for (int t = 0; t < T; ++t) {
        Tensor slice({Y, X});
        for (int i = 0; i < Y; ++i)
            for (int j = 0; j < X; ++j) slice.at(i, j) = hr.values.at(t, i, j);
        Tensor coarse = coarsen(slice, p.scale);
        for (int i = 0; i < ly; ++i)
            for (int j = 0; j < lx; ++j) {
                double v = coarse.at(i, j);
                if (p.mos_perturb > 0.0)
                    v += p.mos_perturb *
                         eval_modes(perturb_modes, static_cast<double>(i) / ly,
                                    static_cast<double>(j) / lx, t);
                lr.values.at(t, i, j) = v;
            }
    }
    const std::string lr_path = out_dir + "/predictand_lr.grd";
    save_cube(lr_path, lr);

    // Intermediate-resolution predictors: one coupled to the predictand, the
    // rest independent smooth fields.
    const int my = Y / 2, mx = X / 2;
    GridFile pf;
    pf.dims["time"] = T;
    pf.dims["lat"] = my;
    pf.dims["lon"] = mx;
    pf.coords["time"] = times;
    std::vector<double> mlats(static_cast<std::size_t>(my)), mlons(static_cast<std::size_t>(mx));
    for (int i = 0; i < my; ++i)
        mlats[static_cast<std::size_t>(i)] = 0.5 * (lats[static_cast<std::size_t>(2 * i)] +
                                                    lats[static_cast<std::size_t>(2 * i + 1)]);
    for (int j = 0; j < mx; ++j)
        mlons[static_cast<std::size_t>(j)] = 0.5 * (lons[static_cast<std::size_t>(2 * j)] +
                                                    lons[static_cast<std::size_t>(2 * j + 1)]);
    pf.coords["lat"] = mlats;
    pf.coords["lon"] = mlons;

    for (int n = 0; n < p.n_predictors; ++n) {
        Tensor var({T, my, mx});
        Rng pr = Rng::derive(p.seed, "predictor", static_cast<std::uint64_t>(n));
        const auto own_modes = draw_modes(pr, 3, 2.5);
        for (int t = 0; t < T; ++t) {
            Tensor slice({Y, X});
            for (int i = 0; i < Y; ++i)
                for (int j = 0; j < X; ++j) slice.at(i, j) = hr.values.at(t, i, j);
            Tensor coupled = coarsen(slice, 2);
            for (int i = 0; i < my; ++i)
                for (int j = 0; j < mx; ++j) {
                    const double own = eval_modes(own_modes, static_cast<double>(i) / my,
                                                  static_cast<double>(j) / mx, t);
                    var.at(t, i, j) = n == 0 ? 0.7 * coupled.at(i, j) + 0.3 * own : own;
                }
        }
        pf.add_var("predictor" + std::to_string(n + 1), {"time", "lat", "lon"}, std::move(var),
                   "a.u.");
    }
    const std::string pred_path = out_dir + "/predictors.grd";
    pf.write(pred_path);

    GridFile sf;
    sf.dims["lat"] = Y;
    sf.dims["lon"] = X;
    sf.coords["lat"] = lats;
    sf.coords["lon"] = lons;
    sf.add_var("topography", {"lat", "lon"}, topo, "normalized");
    sf.add_var("landsea", {"lat", "lon"}, landsea, "fraction");
    const std::string statics_path = out_dir + "/statics.grd";
    sf.write(statics_path);

    return {hr_path, lr_path, pred_path, statics_path};
}

}  // namespace dsc
