#include "dsc/datacube.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsc/gridfile.hpp"

namespace dsc {

void DataCube::validate() const {
    if (values.rank() != 3 && values.rank() != 4) throw std::runtime_error("cube must be rank 3 or 4");
    if (static_cast<int>(times.size()) != n_time()) throw std::runtime_error("time coordinate length mismatch");
    if (static_cast<int>(lats.size()) != n_y()) throw std::runtime_error("lat coordinate length mismatch");
    if (static_cast<int>(lons.size()) != n_x()) throw std::runtime_error("lon coordinate length mismatch");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw std::runtime_error("unsorted time axis");
    const std::int64_t slice = static_cast<std::int64_t>(n_y()) * n_x() * n_channel();
    for (int t = 0; t < n_time(); ++t) {
        bool any = false;
        for (std::int64_t i = 0; i < slice && !any; ++i)
            any = !std::isnan(values[t * slice + i]);
        if (!any) throw std::runtime_error("empty time slice");
    }
}

DataCube load_cube(const std::string& path, const std::string& variable) {
    GridFile f = GridFile::read(path);
    const GridVar* v = f.find(variable);
    if (!v) throw std::runtime_error("variable not found");
    if (v->dims.size() < 3 || v->dims[0] != "time" || v->dims[1] != "lat" || v->dims[2] != "lon")
        throw std::runtime_error("variable is not (time, lat, lon[, channel]) gridded");

    DataCube cube;
    cube.values = v->data;
    cube.name = v->name;
    cube.units = v->units;
    if (auto it = f.coords.find("time"); it != f.coords.end()) cube.times = it->second;
    if (auto it = f.coords.find("lat"); it != f.coords.end()) cube.lats = it->second;
    if (auto it = f.coords.find("lon"); it != f.coords.end()) cube.lons = it->second;
    if (cube.times.empty())
        for (int t = 0; t < cube.values.dim(0); ++t) cube.times.push_back(t);

    if (v->missing_value) {
        const double sentinel = *v->missing_value;
        for (double& x : cube.values.data)
            if (x == sentinel) x = std::nan("");
    }
    cube.validate();
    return cube;
}

void save_cube(const std::string& path, const DataCube& cube,
               const std::vector<std::pair<std::string, std::string>>& attrs) {
    GridFile f;
    f.dims["time"] = cube.n_time();
    f.dims["lat"] = cube.n_y();
    f.dims["lon"] = cube.n_x();
    f.coords["time"] = cube.times;
    f.coords["lat"] = cube.lats;
    f.coords["lon"] = cube.lons;
    for (const auto& [k, v] : attrs) f.attrs[k] = v;
    std::vector<std::string> dims = {"time", "lat", "lon"};
    if (cube.values.rank() == 4) {
        f.dims["channel"] = cube.values.dim(3);
        dims.push_back("channel");
    }
    f.add_var(cube.name.empty() ? "field" : cube.name, dims, cube.values, cube.units);
    f.write(path);
}

StaticFieldSet load_statics(const std::string& path, const std::vector<std::string>& variables) {
    GridFile f = GridFile::read(path);
    StaticFieldSet set;
    int y = -1, x = -1;
    for (const auto& name : variables) {
        const GridVar* v = f.find(name);
        if (!v) throw std::runtime_error("variable not found");
        if (v->dims.size() != 2 || v->dims[0] != "lat" || v->dims[1] != "lon")
            throw std::runtime_error("static variable is not (lat, lon) gridded");
        if (y < 0) {
            y = v->data.dim(0);
            x = v->data.dim(1);
            set.fields = Tensor({y, x, static_cast<int>(variables.size())});
        } else if (v->data.dim(0) != y || v->data.dim(1) != x) {
            throw std::runtime_error("static grid mismatch");
        }
        const int c = static_cast<int>(set.names.size());
        for (int i = 0; i < y; ++i)
            for (int j = 0; j < x; ++j) set.fields.at(i, j, c) = v->data.at(i, j);
        set.names.push_back(name);
    }
    return set;
}

namespace {

std::pair<int, int> coord_range(const std::vector<double>& coords, double lo, double hi) {
    int first = -1, last = -1;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (coords[i] >= lo && coords[i] <= hi) {
            if (first < 0) first = static_cast<int>(i);
            last = static_cast<int>(i);
        }
    }
    return {first, last};
}

}  // namespace

DataCube spatial_subset(const DataCube& cube, double lat_lo, double lat_hi, double lon_lo,
                        double lon_hi) {
    const auto [y0, y1] = coord_range(cube.lats, lat_lo, lat_hi);
    const auto [x0, x1] = coord_range(cube.lons, lon_lo, lon_hi);
    if (y0 < 0 || x0 < 0) throw std::runtime_error("empty subset");

    const int ny = y1 - y0 + 1, nx = x1 - x0 + 1, nc = cube.n_channel();
    DataCube out;
    out.name = cube.name;
    out.units = cube.units;
    out.times = cube.times;
    out.lats.assign(cube.lats.begin() + y0, cube.lats.begin() + y1 + 1);
    out.lons.assign(cube.lons.begin() + x0, cube.lons.begin() + x1 + 1);

    std::vector<int> shape = {cube.n_time(), ny, nx};
    if (cube.values.rank() == 4) shape.push_back(nc);
    out.values = Tensor(shape);
    for (int t = 0; t < cube.n_time(); ++t)
        for (int i = 0; i < ny; ++i)
            for (int j = 0; j < nx; ++j)
                for (int c = 0; c < nc; ++c) {
                    const double v = cube.values.rank() == 4 ? cube.values.at(t, y0 + i, x0 + j, c)
                                                             : cube.values.at(t, y0 + i, x0 + j);
                    if (cube.values.rank() == 4)
                        out.values.at(t, i, j, c) = v;
                    else
                        out.values.at(t, i, j) = v;
                }
    return out;
}

std::pair<DataCube, DataCube> temporal_split(const DataCube& cube, double holdout_fraction) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw std::runtime_error("invalid fraction");
    const int t_total = cube.n_time();
    if (t_total < 2) throw std::runtime_error("cube too short to split");
    int n_holdout = static_cast<int>(std::ceil(holdout_fraction * t_total));
    n_holdout = std::min(n_holdout, t_total - 1);
    const int n_train = t_total - n_holdout;

    const std::int64_t slice = cube.values.numel() / t_total;
    auto take = [&](int t0, int n) {
        DataCube part;
        part.name = cube.name;
        part.units = cube.units;
        part.lats = cube.lats;
        part.lons = cube.lons;
        part.times.assign(cube.times.begin() + t0, cube.times.begin() + t0 + n);
        std::vector<int> shape = cube.values.shape;
        shape[0] = n;
        part.values = Tensor(shape);
        std::copy(cube.values.data.begin() + t0 * slice, cube.values.data.begin() + (t0 + n) * slice,
                  part.values.data.begin());
        return part;
    };
    return {take(0, n_train), take(n_train, n_holdout)};
}

DataCube concat_time(const DataCube& a, const DataCube& b) {
    if (a.n_y() != b.n_y() || a.n_x() != b.n_x() || a.n_channel() != b.n_channel())
        throw std::runtime_error("grid mismatch in time concat");
    DataCube out;
    out.name = a.name;
    out.units = a.units;
    out.lats = a.lats;
    out.lons = a.lons;
    out.times = a.times;
    out.times.insert(out.times.end(), b.times.begin(), b.times.end());
    std::vector<int> shape = a.values.shape;
    shape[0] = a.n_time() + b.n_time();
    out.values = Tensor(shape);
    std::copy(a.values.data.begin(), a.values.data.end(), out.values.data.begin());
    std::copy(b.values.data.begin(), b.values.data.end(), out.values.data.begin() + a.values.numel());
    return out;
}

namespace {

/// Bracketing index and weight for linear interpolation at coordinate v.
struct LinWeight {
    int i0;
    double w1;  // weight of coords[i0 + 1]
};

LinWeight lin_weight(const std::vector<double>& coords, double v) {
    if (v < coords.front() - 1e-12 || v > coords.back() + 1e-12)
        throw std::runtime_error("extrapolation not supported");
    if (v <= coords.front()) return {0, 0.0};
    if (v >= coords.back()) return {static_cast<int>(coords.size()) - 2, 1.0};
    int i = static_cast<int>(std::upper_bound(coords.begin(), coords.end(), v) - coords.begin()) - 1;
    i = std::min(i, static_cast<int>(coords.size()) - 2);
    const double span = coords[i + 1] - coords[i];
    return {i, (v - coords[i]) / span};
}

}  // namespace

DataCube regrid_bilinear(const DataCube& cube, const std::vector<double>& target_lats,
                         const std::vector<double>& target_lons) {
    if (cube.n_y() < 2 || cube.n_x() < 2) throw std::runtime_error("source grid too small to regrid");
    std::vector<LinWeight> wy, wx;
    wy.reserve(target_lats.size());
    wx.reserve(target_lons.size());
    for (double v : target_lats) wy.push_back(lin_weight(cube.lats, v));
    for (double v : target_lons) wx.push_back(lin_weight(cube.lons, v));

    const int ny = static_cast<int>(target_lats.size());
    const int nx = static_cast<int>(target_lons.size());
    const int nc = cube.n_channel();

    DataCube out;
    out.name = cube.name;
    out.units = cube.units;
    out.times = cube.times;
    out.lats = target_lats;
    out.lons = target_lons;
    std::vector<int> shape = {cube.n_time(), ny, nx};
    if (cube.values.rank() == 4) shape.push_back(nc);
    out.values = Tensor(shape);

    auto src = [&](int t, int i, int j, int c) {
        return cube.values.rank() == 4 ? cube.values.at(t, i, j, c) : cube.values.at(t, i, j);
    };
    for (int t = 0; t < cube.n_time(); ++t)
        for (int i = 0; i < ny; ++i)
            for (int j = 0; j < nx; ++j)
                for (int c = 0; c < nc; ++c) {
                    const auto& ay = wy[i];
                    const auto& ax = wx[j];
                    const double v00 = src(t, ay.i0, ax.i0, c);
                    const double v01 = src(t, ay.i0, ax.i0 + 1, c);
                    const double v10 = src(t, ay.i0 + 1, ax.i0, c);
                    const double v11 = src(t, ay.i0 + 1, ax.i0 + 1, c);
                    const double v = (1 - ay.w1) * ((1 - ax.w1) * v00 + ax.w1 * v01) +
                                     ay.w1 * ((1 - ax.w1) * v10 + ax.w1 * v11);
                    if (cube.values.rank() == 4)
                        out.values.at(t, i, j, c) = v;
                    else
                        out.values.at(t, i, j) = v;
                }
    return out;
}

}  // namespace dsc
