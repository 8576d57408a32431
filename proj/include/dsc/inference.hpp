#pragma once

#include "dsc/networks.hpp"
#include "dsc/pairing.hpp"
#include "dsc/scaler.hpp"

namespace dsc {

/// Monte Carlo dropout ensemble. members is (n, y_hr, x_hr, 1); mean and std
/// are per-cell reductions (std uses n-1 in the denominator).
struct Ensemble {
    Tensor members;
    Tensor mean;
    Tensor std;
};

/// Deterministic forward pass mapped back to physical units with the fitted
/// predictand scaler.
Tensor predict(Model& model, const SamplePair& sample, const ScalerState& scaler);

/// n_members stochastic forward passes with independent dropout draws,
/// deterministic under (seed, member index). Error: "MC dropout requires
/// dropout" when the model has dropout_rate = 0.
Ensemble mc_predict(Model& model, const SamplePair& sample, const ScalerState& scaler,
                    int n_members, std::uint64_t seed);

}  // namespace dsc
