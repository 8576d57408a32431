#pragma once

#include <string>

#include "dsc/datacube.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

enum class ScalerKind { Standard, MinMax };

/// NaN-aware global scaler. Statistics are computed once over every non-NaN
/// cell of the training cube and are immutable afterwards; transforming the
/// holdout with the same state never re-fits.
struct ScalerState {
    ScalerKind kind = ScalerKind::Standard;
    double mean = 0.0;
    double std = 1.0;
    double min = 0.0;
    double max = 1.0;
    bool fitted = false;

    /// Error: "no valid data" when the cube is all-NaN.
    static ScalerState fit(ScalerKind kind, const Tensor& values);
    static ScalerState fit(ScalerKind kind, const DataCube& cube) { return fit(kind, cube.values); }

    /// standard: (x - mean)/std; minmax: (x - min)/(max - min); NaN -> NaN.
    /// Error: "scaler not fitted".
    Tensor transform(const Tensor& values) const;
    DataCube transform(const DataCube& cube) const;

    /// Exact algebraic inverse on non-NaN cells.
    Tensor inverse_transform(const Tensor& values) const;
    DataCube inverse_transform(const DataCube& cube) const;

    double transform_value(double x) const;
    double inverse_value(double y) const;

    void save(const std::string& path) const;
    static ScalerState load(const std::string& path);
};

std::string to_string(ScalerKind kind);
ScalerKind scaler_kind_from_string(const std::string& s);

}  // namespace dsc
