#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsc/datacube.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

enum class Regime { MOS, PerfectProg };
enum class Upsampling { PIN, RC, DC, SPC };
enum class SampleKind { Spatial, Spatiotemporal };

struct PairingConfig {
    Regime regime = Regime::PerfectProg;
    Upsampling upsampling = Upsampling::SPC;
    int scale = 2;
    SampleKind sample_kind = SampleKind::Spatial;
    int window_length = 8;  // spatiotemporal only
};

/// One training example. lr_input is (y_lr, x_lr, C_in) for spatial samples
/// or (t_window, y_lr, x_lr, C_in) for spatiotemporal ones; the predictand
/// occupies channel 0 and interpolated predictors the remaining channels.
/// hr_target is (y_hr, x_hr, 1) with NaN cells zero-filled and recorded in
/// the validity mask instead.
struct SamplePair {
    Tensor lr_input;
    Tensor hr_target;
    Tensor mask;  // (y_hr, x_hr, 1), 1 where target valid
    Tensor statics;
    int time_index = 0;
    std::int64_t valid_cells = 0;
};

/// NaN-aware block-mean pooling by an integer factor. Input (y, x) or
/// (y, x, c). All-NaN blocks stay NaN. Error: "incompatible scale".
Tensor coarsen(const Tensor& field, int scale);

/// Catmull-Rom bicubic resize of a (y, x) or (y, x, c) field to new spatial
/// dims, clamped at borders. NaN cells poison their interpolation stencil.
Tensor resize_bicubic(const Tensor& field, int out_y, int out_x);

/// true (1.0) where the target is finite. Returns the mask and whether the
/// sample should be dropped (no valid cell at all).
struct ValidityMask {
    Tensor mask;
    std::int64_t valid_cells = 0;
    bool all_invalid = false;
};
ValidityMask mask_from_nans(const Tensor& hr_target);

/// Builds the paired sample sequence under the configured regime.
///   MOS:          predictand_lr must be present and time-aligned.
///   PerfectProg:  predictand_lr must be absent; the LR input is synthesized
///                 by block-mean coarsening of the HR predictand.
/// Predictors are regridded bilinearly onto the LR input grid (or the HR
/// grid in the PIN regime) and concatenated along channels. Samples whose
/// target is entirely NaN are dropped with a warning.
std::vector<SamplePair> make_pairs(const DataCube& predictand_hr,
                                   const std::optional<DataCube>& predictand_lr,
                                   const std::vector<DataCube>& predictors,
                                   const StaticFieldSet& statics, const PairingConfig& cfg);

std::string to_string(Regime r);
std::string to_string(Upsampling u);
std::string to_string(SampleKind k);
Regime regime_from_string(const std::string& s);
Upsampling upsampling_from_string(const std::string& s);
SampleKind sample_kind_from_string(const std::string& s);

}  // namespace dsc
