#include "dsc/scaler.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dsc {

ScalerState ScalerState::fit(ScalerKind kind, const Tensor& values) {
    double sum = 0.0, sumsq = 0.0;
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    std::int64_t n = 0;
    for (double v : values.data) {
        if (std::isnan(v)) continue;
        sum += v;
        sumsq += v * v;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        ++n;
    }
    if (n == 0) throw std::runtime_error("no valid data");

    ScalerState s;
    s.kind = kind;
    s.fitted = true;
    if (kind == ScalerKind::Standard) {
        s.mean = sum / static_cast<double>(n);
        const double var = std::max(0.0, sumsq / static_cast<double>(n) - s.mean * s.mean);
        s.std = std::sqrt(var);
        if (!(s.std > 0.0)) throw std::runtime_error("zero variance, cannot standardize");
    } else {
        s.min = mn;
        s.max = mx;
        if (!(s.max > s.min)) throw std::runtime_error("constant data, cannot min-max scale");
    }
    return s;
}

double ScalerState::transform_value(double x) const {
    if (std::isnan(x)) return x;
    return kind == ScalerKind::Standard ? (x - mean) / std : (x - min) / (max - min);
}

double ScalerState::inverse_value(double y) const {
    if (std::isnan(y)) return y;
    return kind == ScalerKind::Standard ? y * std + mean : y * (max - min) + min;
}

Tensor ScalerState::transform(const Tensor& values) const {
    if (!fitted) throw std::runtime_error("scaler not fitted");
    Tensor out = values;
    for (double& v : out.data) v = transform_value(v);
    return out;
}

Tensor ScalerState::inverse_transform(const Tensor& values) const {
    if (!fitted) throw std::runtime_error("scaler not fitted");
    Tensor out = values;
    for (double& v : out.data) v = inverse_value(v);
    return out;
}

DataCube ScalerState::transform(const DataCube& cube) const {
    DataCube out = cube;
    out.values = transform(cube.values);
    return out;
}

DataCube ScalerState::inverse_transform(const DataCube& cube) const {
    DataCube out = cube;
    out.values = inverse_transform(cube.values);
    return out;
}

std::string to_string(ScalerKind kind) {
    return kind == ScalerKind::Standard ? "standard" : "minmax";
}

ScalerKind scaler_kind_from_string(const std::string& s) {
    if (s == "standard") return ScalerKind::Standard;
    if (s == "minmax") return ScalerKind::MinMax;
    throw std::runtime_error("unknown scaler kind: " + s);
}

void ScalerState::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scaler file: " + path);
    out.precision(17);
    out << "kind = " << to_string(kind) << "\n";
    out << "mean = " << mean << "\n";
    out << "std = " << std << "\n";
    out << "min = " << min << "\n";
    out << "max = " << max << "\n";
    out << "fitted = " << (fitted ? "true" : "false") << "\n";
}

ScalerState ScalerState::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scaler file: " + path);
    ScalerState s;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key, eq, value;
        if (!(ls >> key >> eq >> value) || eq != "=") continue;
        if (key == "kind")
            s.kind = scaler_kind_from_string(value);
        else if (key == "mean")
            s.mean = std::stod(value);
        else if (key == "std")
            s.std = std::stod(value);
        else if (key == "min")
            s.min = std::stod(value);
        else if (key == "max")
            s.max = std::stod(value);
        else if (key == "fitted")
            s.fitted = (value == "true");
    }
    return s;
}

}  // namespace dsc
