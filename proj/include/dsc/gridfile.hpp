#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsc/tensor.hpp"

namespace dsc {

/// Self-describing gridded array container (".grd"), the on-disk format for
/// every dataset, prediction and metric map in this project. A file holds
/// named dimensions (CF-style "time", "lat", "lon"), coordinate vectors,
/// free-form attributes and any number of variables stored as float64.
///
/// Layout: magic "GRD1", a u64 little-endian header length, a JSON header,
/// then the raw data section. Variable offsets in the header are relative to
/// the start of the data section.
struct GridVar {
    std::string name;
    std::vector<std::string> dims;
    Tensor data;
    std::string units;
    std::optional<double> missing_value;
};

struct GridFile {
    std::map<std::string, int> dims;                    // name -> length
    std::map<std::string, std::vector<double>> coords;  // name -> coordinate vector
    std::map<std::string, std::string> attrs;
    std::vector<GridVar> vars;

    const GridVar* find(const std::string& name) const;
    GridVar& add_var(const std::string& name, std::vector<std::string> dims, Tensor data,
                     const std::string& units = "");

    void write(const std::string& path) const;
    static GridFile read(const std::string& path);
};

}  // namespace dsc
