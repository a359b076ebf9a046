// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/scene_io.hpp"
#include "splatcore/splat.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace splatcore {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

/// Vertex property names in file order for a given SH degree.
inline std::vector<std::string> ply_property_names(int sh_degree) {
    const int b = sh_coeff_count(sh_degree);
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < 3 * (b - 1); ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
    return names;
}

/// Binary little-endian float32 vertex list; opacity stored as a logit,
/// scales as logs, normals as zeros.
inline void write_ply(const GaussianCloud &cloud, const std::filesystem::path &path) {
    validate_cloud(cloud);
    const int b = cloud.coeffs_per_channel();
    const auto names = ply_property_names(cloud.sh_degree);
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << "\n";
    for (const auto &n : names) header << "property float " << n << "\n";
    header << "end_header\n";

    std::vector<float> row(names.size());
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot write " + path.string());
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::size_t k = 0;
        for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(cloud.means[i][a]);
        for (int a = 0; a < 3; ++a) row[k++] = 0.0f;
        const auto sh = cloud.sh_of(i);
        for (int c = 0; c < 3; ++c) row[k++] = static_cast<float>(sh[static_cast<std::size_t>(c * b)]);
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < b; ++j) row[k++] = static_cast<float>(sh[static_cast<std::size_t>(c * b + j)]);
        row[k++] = static_cast<float>(logit(cloud.opacities[i]));
        for (int a = 0; a < 3; ++a) row[k++] = static_cast<float>(std::log(cloud.scales[i][a]));
        for (int a = 0; a < 4; ++a) row[k++] = static_cast<float>(cloud.rotations[i][a]);
        out.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    require(out.good(), ErrorKind::io, "write to " + path.string() + " failed");
}

namespace detail {

struct PlyProperty {
    std::string name;
    std::size_t offset = 0;
    bool is_double = false;
};

inline std::size_t ply_type_size(const std::string &type) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1}, {"uchar", 1}, {"int8", 1}, {"uint8", 1}, {"short", 2}, {"ushort", 2}, {"int16", 2},
        {"uint16", 2}, {"int", 4}, {"uint", 4}, {"int32", 4}, {"uint32", 4}, {"float", 4}, {"float32", 4},
        {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(type);
    require(it != sizes.end(), ErrorKind::parse, "unknown PLY property type '" + type + "'");
    return it->second;
}

} // namespace detail

/// Reads a vertex-only binary little-endian PLY. Quaternions are renormalized.
inline GaussianCloud read_ply(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open " + path.string());
    const std::string where = path.string() + ": ";
    std::string line;
    std::getline(in, line);
    require(line == "ply", ErrorKind::parse, where + "missing ply magic");

    std::size_t count = 0, stride = 0;
    bool have_vertex = false;
    std::map<std::string, detail::PlyProperty> props;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") break;
        if (word == "comment" || word == "obj_info" || word.empty()) continue;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            require(fmt == "binary_little_endian", ErrorKind::parse, where + "format must be binary_little_endian, got " + fmt);
        } else if (word == "element") {
            std::string name;
            ls >> name >> count;
            require(name == "vertex" && !have_vertex, ErrorKind::parse, where + "unexpected element '" + name + "'");
            have_vertex = true;
        } else if (word == "property") {
            require(have_vertex, ErrorKind::parse, where + "property before element");
            std::string type, name;
            ls >> type;
            require(type != "list", ErrorKind::parse, where + "list properties are not supported");
            ls >> name;
            props[name] = {name, stride, type == "double" || type == "float64"};
            const std::size_t size = detail::ply_type_size(type);
            require(size == 4 || size == 8, ErrorKind::parse, where + "property '" + name + "' must be float or double");
            stride += size;
        } else {
            throw Error(ErrorKind::parse, where + "unexpected header line '" + line + "'");
        }
    }
    require(have_vertex, ErrorKind::parse, where + "no vertex element");

    auto need = [&](const std::string &name) -> const detail::PlyProperty & {
        const auto it = props.find(name);
        require(it != props.end(), ErrorKind::parse, where + "missing property '" + name + "'");
        return it->second;
    };
    int n_rest = 0;
    while (props.count("f_rest_" + std::to_string(n_rest))) ++n_rest;
    require(n_rest % 3 == 0, ErrorKind::parse, where + "f_rest count is not a multiple of 3");
    const int b = 1 + n_rest / 3;
    int degree = 0;
    while (degree <= kMaxShDegree && sh_coeff_count(degree) != b) ++degree;
    require(degree <= kMaxShDegree, ErrorKind::parse, where + "f_rest count does not match any SH degree");

    std::vector<const detail::PlyProperty *> slots;
    for (const auto &name : ply_property_names(degree)) {
        if (name[0] == 'n' && name.size() == 2) continue; // normals are optional
        slots.push_back(&need(name));
    }

    std::vector<char> row(stride);
    auto value = [&](const detail::PlyProperty *p) {
        if (p->is_double) {
            double v;
            std::memcpy(&v, row.data() + p->offset, sizeof v);
            return v;
        }
        float v;
        std::memcpy(&v, row.data() + p->offset, sizeof v);
        return static_cast<double>(v);
    };

    GaussianCloud cloud;
    cloud.sh_degree = degree;
    cloud.reserve(count);
    std::vector<double> sh(static_cast<std::size_t>(3 * b));
    for (std::size_t i = 0; i < count; ++i) {
        in.read(row.data(), static_cast<std::streamsize>(stride));
        require(in.gcount() == static_cast<std::streamsize>(stride), ErrorKind::parse, where + "truncated vertex data");
        std::size_t k = 0;
        Vec3 mean;
        for (int a = 0; a < 3; ++a) mean[a] = value(slots[k++]);
        for (int c = 0; c < 3; ++c) sh[static_cast<std::size_t>(c * b)] = value(slots[k++]);
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < b; ++j) sh[static_cast<std::size_t>(c * b + j)] = value(slots[k++]);
        const double opacity = sigmoid(value(slots[k++]));
        Vec3 scale;
        for (int a = 0; a < 3; ++a) scale[a] = std::exp(value(slots[k++]));
        Vec4 rot;
        for (int a = 0; a < 4; ++a) rot[a] = value(slots[k++]);
        const double qn = rot.norm();
        require(qn > 1e-12 && std::isfinite(qn), ErrorKind::parse, where + "vertex " + std::to_string(i) + " has a zero rotation");
        cloud.push_back(mean, rot / qn, scale, opacity, sh);
    }
    validate_cloud(cloud);
    return cloud;
}

/// Contents of the `cloud.meta.json` sidecar.
struct CloudMeta {
    int sh_degree = 0;
    std::vector<int> source_frames;
};

inline void write_cloud_meta(const std::filesystem::path &path, const CloudMeta &meta) {
    write_json_file(path, {{"schema_version", 1}, {"sh_degree", meta.sh_degree}, {"source_frames", meta.source_frames}});
}

inline CloudMeta read_cloud_meta(const std::filesystem::path &path) {
    const nlohmann::json j = read_json_file(path);
    try {
        return {j.at("sh_degree").get<int>(), j.at("source_frames").get<std::vector<int>>()};
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

} // namespace splatcore
