#include "dsc/gridfile.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dsc {

using nlohmann::json;

const GridVar* GridFile::find(const std::string& name) const {
    for (const auto& v : vars)
        if (v.name == name) return &v;
    return nullptr;
}

GridVar& GridFile::add_var(const std::string& name, std::vector<std::string> var_dims, Tensor data,
                           const std::string& units) {
    std::int64_t expect = 1;
    for (std::size_t i = 0; i < var_dims.size(); ++i) {
        auto it = dims.find(var_dims[i]);
        if (it == dims.end()) throw std::runtime_error("unknown dimension: " + var_dims[i]);
        if (data.dim(static_cast<int>(i)) != it->second)
            throw std::runtime_error("dimension length mismatch for " + var_dims[i]);
        expect *= it->second;
    }
    if (expect != data.numel()) throw std::runtime_error("variable size mismatch: " + name);
    vars.push_back(GridVar{name, std::move(var_dims), std::move(data), units, std::nullopt});
    return vars.back();
}

void GridFile::write(const std::string& path) const {
    json hdr;
    hdr["dims"] = json::object();
    for (const auto& [k, v] : dims) hdr["dims"][k] = v;
    hdr["coords"] = json::object();
    for (const auto& [k, v] : coords) hdr["coords"][k] = v;
    hdr["attrs"] = json::object();
    for (const auto& [k, v] : attrs) hdr["attrs"][k] = v;
    hdr["vars"] = json::object();

    std::uint64_t offset = 0;
    for (const auto& v : vars) {
        json jv;
        jv["dims"] = v.dims;
        jv["offset"] = offset;
        jv["units"] = v.units;
        if (v.missing_value) jv["missing_value"] = *v.missing_value;
        hdr["vars"][v.name] = jv;
        offset += static_cast<std::uint64_t>(v.data.numel()) * sizeof(double);
    }

    const std::string htxt = hdr.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write("GRD1", 4);
    const std::uint64_t hlen = htxt.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
    for (const auto& v : vars)
        out.write(reinterpret_cast<const char*>(v.data.data.data()),
                  static_cast<std::streamsize>(v.data.numel() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

GridFile GridFile::read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "GRD1", 4) != 0)
        throw std::runtime_error("not a gridded array file: " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string htxt(hlen, '\0');
    in.read(htxt.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated header: " + path);

    json hdr = json::parse(htxt);
    GridFile f;
    for (auto& [k, v] : hdr.at("dims").items()) f.dims[k] = v.get<int>();
    if (hdr.contains("coords"))
        for (auto& [k, v] : hdr["coords"].items()) f.coords[k] = v.get<std::vector<double>>();
    if (hdr.contains("attrs"))
        for (auto& [k, v] : hdr["attrs"].items()) f.attrs[k] = v.get<std::string>();

    const std::streampos data_start = in.tellg();
    for (auto& [name, jv] : hdr.at("vars").items()) {
        GridVar v;
        v.name = name;
        v.dims = jv.at("dims").get<std::vector<std::string>>();
        v.units = jv.value("units", "");
        if (jv.contains("missing_value")) v.missing_value = jv["missing_value"].get<double>();
        std::vector<int> shape;
        for (const auto& d : v.dims) {
            auto it = f.dims.find(d);
            if (it == f.dims.end()) throw std::runtime_error("unknown dimension: " + d);
            shape.push_back(it->second);
        }
        v.data = Tensor(shape);
        in.seekg(data_start + static_cast<std::streamoff>(jv.at("offset").get<std::uint64_t>()));
        in.read(reinterpret_cast<char*>(v.data.data.data()),
                static_cast<std::streamsize>(v.data.numel() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated data for variable " + name + ": " + path);
        f.vars.push_back(std::move(v));
    }
    return f;
}

}  // namespace dsc
