#pragma once

#include <string>
#include <vector>

#include "dsc/tensor.hpp"

namespace dsc {

/// A gridded time series: rank-3 (time, y, x) or rank-4 (time, y, x, channel)
/// values with coordinate metadata. NaN marks missing cells. The single
/// source of array-and-coordinate truth for the rest of the pipeline.
struct DataCube {
    Tensor values;
    std::vector<double> times;  // strictly increasing
    std::vector<double> lats;   // ascending, length y
    std::vector<double> lons;   // ascending, length x
    std::string name;
    std::string units;

    int n_time() const { return values.dim(0); }
    int n_y() const { return values.dim(1); }
    int n_x() const { return values.dim(2); }
    int n_channel() const { return values.rank() == 4 ? values.dim(3) : 1; }

    /// Throws if coordinate lengths, time ordering, or the one-non-NaN-per-
    /// time-slice requirement are violated.
    void validate() const;
};

/// Time-invariant high-resolution fields (topography, land-sea mask, ...)
/// stacked as (y, x, channel).
struct StaticFieldSet {
    Tensor fields;  // (y, x, channel)
    std::vector<std::string> names;

    int n_y() const { return fields.dim(0); }
    int n_x() const { return fields.dim(1); }
    int n_channel() const { return fields.dim(2); }
};

/// Reads one variable from a gridded file into a DataCube. Missing-value
/// sentinels become NaN. Errors: "variable not found", "unsorted time axis".
DataCube load_cube(const std::string& path, const std::string& variable);

/// Writes a cube as a gridded file, optionally with provenance attributes.
void save_cube(const std::string& path, const DataCube& cube,
               const std::vector<std::pair<std::string, std::string>>& attrs = {});

/// Loads (y, x) static variables from a gridded file, stacked in the order
/// given.
StaticFieldSet load_statics(const std::string& path, const std::vector<std::string>& variables);

/// Grid points with lat in [lat_lo, lat_hi] and lon in [lon_lo, lon_hi],
/// inclusive. Error: "empty subset".
DataCube spatial_subset(const DataCube& cube, double lat_lo, double lat_hi, double lon_lo,
                        double lon_hi);

/// Splits off the trailing ceil(fraction * T) time steps as the holdout.
/// Error: "invalid fraction" unless 0 < fraction < 1.
std::pair<DataCube, DataCube> temporal_split(const DataCube& cube, double holdout_fraction);

/// Bilinear interpolation onto a new coordinate grid. NaN in a stencil
/// poisons the output cell. Error: "extrapolation not supported" when the
/// target grid leaves the source hull.
DataCube regrid_bilinear(const DataCube& cube, const std::vector<double>& target_lats,
                         const std::vector<double>& target_lons);

/// Appends b after a along time. Used to verify split/concat round trips and
/// to rebuild full periods.
DataCube concat_time(const DataCube& a, const DataCube& b);

}  // namespace dsc
