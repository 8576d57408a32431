#include "dsc/losses.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace dsc {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::MAE: return "mae";
        case LossKind::MSE: return "mse";
        case LossKind::DSSIM: return "dssim";
        case LossKind::MSDSSIM: return "msdssim";
        default: return "dssim_mae";
    }
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "mae") return LossKind::MAE;
    if (s == "mse") return LossKind::MSE;
    if (s == "dssim") return LossKind::DSSIM;
    if (s == "msdssim" || s == "ms_dssim") return LossKind::MSDSSIM;
    if (s == "dssim_mae" || s == "dssim+mae") return LossKind::DSSIM_MAE;
    throw std::runtime_error("unknown loss kind: " + s);
}

namespace losses {

using nn::NodeId;
using nn::Tape;

Tensor gaussian_window(int size, double sigma) {
    Tensor w({size, size});
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
            w.at(i, j) = std::exp(-d2 / (2.0 * sigma * sigma));
            total += w.at(i, j);
        }
    for (double& v : w.data) v /= total;
    return w;
}

namespace {

std::int64_t mask_count(const Tensor& mask) {
    std::int64_t n = 0;
    for (double v : mask.data)
        if (v != 0.0) ++n;
    return n;
}

}  // namespace

NodeId mae(Tape& t, NodeId pred, const Tensor& target, const Tensor& mask) {
    if (!shapes_equal(t.val(pred), target)) throw std::runtime_error("loss: shape mismatch");
    const std::int64_t n = mask_count(mask);
    if (n == 0) throw std::runtime_error("no valid cells");
    NodeId d = t.abs(t.sub(pred, t.constant(target)));
    NodeId m = t.mul(d, t.constant(mask));
    return t.scale(t.sum(m), 1.0 / static_cast<double>(n));
}

NodeId mse(Tape& t, NodeId pred, const Tensor& target, const Tensor& mask) {
    if (!shapes_equal(t.val(pred), target)) throw std::runtime_error("loss: shape mismatch");
    const std::int64_t n = mask_count(mask);
    if (n == 0) throw std::runtime_error("no valid cells");
    NodeId d = t.sub(pred, t.constant(target));
    NodeId m = t.mul(t.mul(d, d), t.constant(mask));
    return t.scale(t.sum(m), 1.0 / static_cast<double>(n));
}

namespace {

struct SsimTerms {
    NodeId ssim_mean;  // mean of luminance * contrast-structure map
    NodeId cs_mean;    // mean of contrast-structure map
};

SsimTerms ssim_terms(Tape& t, NodeId x, NodeId y, const LossSpec& spec) {
    const Tensor& vx = t.val(x);
    if (!shapes_equal(vx, t.val(y))) throw std::runtime_error("ssim: shape mismatch");
    if (vx.rank() != 3) throw std::runtime_error("ssim expects rank-3 grids");
    if (spec.ssim_window % 2 == 0) throw std::runtime_error("ssim window must be odd");
    if (vx.dim(0) < spec.ssim_window || vx.dim(1) < spec.ssim_window)
        throw std::runtime_error("grid too small for SSIM window");

    const Tensor win = gaussian_window(spec.ssim_window);
    const double c1 = (spec.ssim_k1 * spec.data_range) * (spec.ssim_k1 * spec.data_range);
    const double c2 = (spec.ssim_k2 * spec.data_range) * (spec.ssim_k2 * spec.data_range);

    NodeId mu_x = t.conv2d_valid_fixed(x, win);
    NodeId mu_y = t.conv2d_valid_fixed(y, win);
    NodeId mu_xx = t.mul(mu_x, mu_x);
    NodeId mu_yy = t.mul(mu_y, mu_y);
    NodeId mu_xy = t.mul(mu_x, mu_y);

    NodeId sigma_xx = t.sub(t.conv2d_valid_fixed(t.mul(x, x), win), mu_xx);
    NodeId sigma_yy = t.sub(t.conv2d_valid_fixed(t.mul(y, y), win), mu_yy);
    NodeId sigma_xy = t.sub(t.conv2d_valid_fixed(t.mul(x, y), win), mu_xy);

    NodeId lum = t.div(t.add_scalar(t.scale(mu_xy, 2.0), c1),
                       t.add_scalar(t.add(mu_xx, mu_yy), c1));
    NodeId cs = t.div(t.add_scalar(t.scale(sigma_xy, 2.0), c2),
                      t.add_scalar(t.add(sigma_xx, sigma_yy), c2));
    return {t.mean(t.mul(lum, cs)), t.mean(cs)};
}

}  // namespace

NodeId ssim(Tape& t, NodeId x, NodeId y, const LossSpec& spec) {
    return ssim_terms(t, x, y, spec).ssim_mean;
}

NodeId dssim(Tape& t, NodeId pred, const Tensor& target, const LossSpec& spec) {
    NodeId s = ssim(t, pred, t.constant(target), spec);
    return t.scale(t.add_scalar(t.scale(s, -1.0), 1.0), 0.5);
}

int max_ms_scales(int min_dim, int window) {
    int n = 0;
    while (n < 5 && window * (1 << n) <= min_dim) ++n;  // window * 2^(n-1) <= dim
    return n;
}

NodeId ms_dssim(Tape& t, NodeId pred, const Tensor& target, const LossSpec& spec) {
    static const std::array<double, 5> canonical = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    const Tensor& vp = t.val(pred);
    const int min_dim = std::min(vp.dim(0), vp.dim(1));
    const int scales = std::min(spec.ms_scales, max_ms_scales(min_dim, spec.ssim_window));
    if (scales < 1) throw std::runtime_error("insufficient scales");

    double wsum = 0.0;
    for (int j = 0; j < scales; ++j) wsum += canonical[static_cast<std::size_t>(j)];

    NodeId x = pred;
    NodeId y = t.constant(target);
    NodeId product = t.constant(Tensor({1}, 1.0));
    for (int j = 0; j < scales; ++j) {
        const SsimTerms terms = ssim_terms(t, x, y, spec);
        const double weight = canonical[static_cast<std::size_t>(j)] / wsum;
        // Last scale carries the luminance term; negatives are rectified so
        // the fractional exponents stay real. A unit exponent (the single-
        // scale case) passes through untouched and reduces to plain DSSIM.
        NodeId term = (j == scales - 1) ? terms.ssim_mean : terms.cs_mean;
        if (weight != 1.0) term = t.pow_scalar(t.relu(term), weight);
        product = t.mul(product, term);
        if (j + 1 < scales) {
            x = t.avg_pool2(x);
            y = t.avg_pool2(y);
        }
    }
    return t.scale(t.add_scalar(t.scale(product, -1.0), 1.0), 0.5);
}

NodeId supervised_loss(Tape& t, NodeId pred, const Tensor& target, const Tensor& mask,
                       const LossSpec& spec) {
    switch (spec.kind) {
        case LossKind::MAE: return mae(t, pred, target, mask);
        case LossKind::MSE: return mse(t, pred, target, mask);
        case LossKind::DSSIM: return dssim(t, pred, target, spec);
        case LossKind::MSDSSIM: return ms_dssim(t, pred, target, spec);
        case LossKind::DSSIM_MAE:
            return t.add(dssim(t, pred, target, spec), mae(t, pred, target, mask));
    }
    throw std::runtime_error("unknown loss kind");
}

namespace {
constexpr double kProbEps = 1e-7;
}

NodeId discriminator_loss(Tape& t, NodeId d_real, NodeId d_fake) {
    NodeId real_term = t.scale(t.log(t.clamp(d_real, kProbEps, 1.0 - kProbEps)), -1.0);
    NodeId one_minus_fake = t.add_scalar(t.scale(d_fake, -1.0), 1.0);
    NodeId fake_term = t.scale(t.log(t.clamp(one_minus_fake, kProbEps, 1.0 - kProbEps)), -1.0);
    return t.add(real_term, fake_term);
}

NodeId generator_loss(Tape& t, NodeId d_fake, NodeId pred, const Tensor& target,
                      const Tensor& mask, double lambda) {
    NodeId adv = t.scale(t.log(t.clamp(d_fake, kProbEps, 1.0 - kProbEps)), -1.0);
    if (lambda == 0.0) return adv;
    return t.add(adv, t.scale(mae(t, pred, target, mask), lambda));
}

// ---- plain values -----------------------------------------------------------

double mae_value(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    Tape t;
    return t.val(mae(t, t.constant(pred), target, mask))[0];
}

double mse_value(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    Tape t;
    return t.val(mse(t, t.constant(pred), target, mask))[0];
}

double ssim_value(const Tensor& x, const Tensor& y, const LossSpec& spec) {
    Tape t;
    return t.val(ssim(t, t.constant(x), t.constant(y), spec))[0];
}

double dssim_value(const Tensor& pred, const Tensor& target, const LossSpec& spec) {
    Tape t;
    return t.val(dssim(t, t.constant(pred), target, spec))[0];
}

double ms_dssim_value(const Tensor& pred, const Tensor& target, const LossSpec& spec) {
    Tape t;
    return t.val(ms_dssim(t, t.constant(pred), target, spec))[0];
}

CganLossValues cgan_losses(double d_real, double d_fake, const Tensor& pred, const Tensor& target,
                           const Tensor& mask, double lambda) {
    Tape t;
    NodeId real_node = t.constant(Tensor({1}, d_real));
    NodeId fake_node = t.constant(Tensor({1}, d_fake));
    CganLossValues v;
    v.d_loss = t.val(discriminator_loss(t, real_node, fake_node))[0];
    v.g_loss = t.val(generator_loss(t, fake_node, t.constant(pred), target, mask, lambda))[0];
    return v;
}

}  // namespace losses
}  // namespace dsc
