#pragma once

#include <string>

#include "dsc/nn/tape.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

enum class LossKind { MAE, MSE, DSSIM, MSDSSIM, DSSIM_MAE };

struct LossSpec {
    LossKind kind = LossKind::MAE;
    int ssim_window = 11;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    double data_range = 1.0;
    int ms_scales = 5;                  // requested; auto-capped by grid size
    double adversarial_lambda = 100.0;  // weight of the pixel term in the generator loss
};

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

namespace losses {

/// Gaussian SSIM window (normalized to unit sum), sigma = 1.5.
Tensor gaussian_window(int size, double sigma = 1.5);

// ---- differentiable graph builders ----------------------------------------

/// Masked pixel losses. Error: "no valid cells" when the mask is empty.
nn::NodeId mae(nn::Tape& t, nn::NodeId pred, const Tensor& target, const Tensor& mask);
nn::NodeId mse(nn::Tape& t, nn::NodeId pred, const Tensor& target, const Tensor& mask);

/// Mean SSIM over valid sliding Gaussian windows; both arguments are graph
/// nodes so gradients flow into either side. Error: "grid too small for SSIM
/// window".
nn::NodeId ssim(nn::Tape& t, nn::NodeId x, nn::NodeId y, const LossSpec& spec);

/// (1 - ssim)/2 against a constant target.
nn::NodeId dssim(nn::Tape& t, nn::NodeId pred, const Tensor& target, const LossSpec& spec);

/// Multi-scale DSSIM: contrast-structure means at every scale, full SSIM at
/// the coarsest, canonical exponents renormalized over the scales actually
/// used. 2x mean pooling between scales. Error: "insufficient scales".
nn::NodeId ms_dssim(nn::Tape& t, nn::NodeId pred, const Tensor& target, const LossSpec& spec);

/// Supervised training loss selected by spec.kind.
nn::NodeId supervised_loss(nn::Tape& t, nn::NodeId pred, const Tensor& target, const Tensor& mask,
                           const LossSpec& spec);

/// Non-saturating conditional-adversarial losses.
///   d_loss = -log d_real - log(1 - d_fake)
///   g_loss = -log d_fake + lambda * mae(pred, target, mask)
/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
nn::NodeId discriminator_loss(nn::Tape& t, nn::NodeId d_real, nn::NodeId d_fake);
nn::NodeId generator_loss(nn::Tape& t, nn::NodeId d_fake, nn::NodeId pred, const Tensor& target,
                          const Tensor& mask, double lambda);

// ---- plain values ----------------------------------------------------------

double mae_value(const Tensor& pred, const Tensor& target, const Tensor& mask);
double mse_value(const Tensor& pred, const Tensor& target, const Tensor& mask);
double ssim_value(const Tensor& x, const Tensor& y, const LossSpec& spec);
double dssim_value(const Tensor& pred, const Tensor& target, const LossSpec& spec);
double ms_dssim_value(const Tensor& pred, const Tensor& target, const LossSpec& spec);

struct CganLossValues {
    double g_loss;
    double d_loss;
};
CganLossValues cgan_losses(double d_real, double d_fake, const Tensor& pred, const Tensor& target,
                           const Tensor& mask, double lambda);

/// Number of MS-SSIM scales usable on a (min_dim) grid with the given
/// window: the largest n with window * 2^(n-1) <= min_dim, capped at 5.
int max_ms_scales(int min_dim, int window);

}  // namespace losses
}  // namespace dsc
