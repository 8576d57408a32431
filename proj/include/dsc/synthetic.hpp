#pragma once

#include <cstdint>
#include <string>

#include "dsc/datacube.hpp"

namespace dsc {

/// Desk-scale synthetic dataset: smooth correlated high-resolution fields
/// (a few random low-wavenumber sine modes plus noise), an optional
/// topography-coupled component that gives the static branch real signal, an
/// optional fixed per-cell bias (for probing location-aware blocks), the
/// derived low-resolution dataset (block-mean coarsening, optionally
/// perturbed as a coarse-model surrogate), two intermediate-resolution
/// predictors and the static fields (ramp topography with fine-scale bumps,
/// binary land-sea mask).
struct SyntheticParams {
    int hr_y = 32;
    int hr_x = 32;
    int t_steps = 200;
    int scale = 4;
    std::uint64_t seed = 0;
    int n_predictors = 2;
    int n_modes = 4;
    double noise = 0.02;
    double topo_coupling = 0.8;
    double mos_perturb = 0.0;    // 0 keeps LR = coarsen(HR) exactly
    double location_bias = 0.0;  // amplitude of the fixed per-cell bias field
};

struct SyntheticDataset {
    std::string predictand_hr;  // file path, variable "field"
    std::string predictand_lr;
    std::string predictors;  // variables "predictor1".."predictorN"
    std::string statics;     // variables "topography", "landsea"
};

/// Writes the four files into out_dir. Bit-identical for a fixed seed.
SyntheticDataset gen_synthetic(const SyntheticParams& params, const std::string& out_dir);

}  // namespace dsc
