#pragma once

#include <string>

#include "dsc/tensor.hpp"

namespace dsc {

/// Renders a (y, x) field to a PNG with a viridis-style colormap over
/// [vmin, vmax]. NaN cells render light gray. Row 0 is drawn at the top.
void write_field_png(const std::string& path, const Tensor& field, double vmin, double vmax);

}  // namespace dsc
