// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/io.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gaussadv {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY codec assumes a little-endian host");

struct PlyProperty {
    std::string name;
    std::string type;
    std::size_t offset = 0;
    std::size_t size = 0;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    std::size_t stride = 0;
    bool has_list = false;
};

std::size_t type_size(const std::string &type) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},   {"uchar", 1},  {"int8", 1},    {"uint8", 1},  {"short", 2},  {"ushort", 2},
        {"int16", 2},  {"uint16", 2}, {"int", 4},     {"uint", 4},   {"int32", 4},  {"uint32", 4},
        {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8},
    };
    auto it = sizes.find(type);
    if (it == sizes.end())
        throw Error(ErrorKind::UnsupportedFormat, "unknown PLY property type '" + type + "'");
    return it->second;
}

double read_scalar(const char *src, const std::string &type) {
    auto load = [src]<typename T>(T) {
        T v;
        std::memcpy(&v, src, sizeof(T));
        return static_cast<double>(v);
    };
    if (type == "float" || type == "float32") return load(float{});
    if (type == "double" || type == "float64") return load(double{});
    if (type == "char" || type == "int8") return load(std::int8_t{});
    if (type == "uchar" || type == "uint8") return load(std::uint8_t{});
    if (type == "short" || type == "int16") return load(std::int16_t{});
    if (type == "ushort" || type == "uint16") return load(std::uint16_t{});
    if (type == "int" || type == "int32") return load(std::int32_t{});
    return load(std::uint32_t{});
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
    constexpr double eps = 1e-7;
    p = std::clamp(p, eps, 1.0 - eps);
    return std::log(p / (1.0 - p));
}

const std::array<const char *, 17> kPlyLayout = {
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
};

} // namespace

GaussianCloud load_ply(const std::filesystem::path &path, std::vector<std::string> *warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot open " + path.string());

    std::string line;
    std::getline(in, line);
    if (line != "ply")
        throw Error(ErrorKind::UnsupportedFormat, path.string() + " is not a PLY file");

    std::vector<PlyElement> elements;
    bool saw_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "end_header")
            break;
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian")
                throw Error(ErrorKind::UnsupportedFormat, "PLY format '" + fmt + "' (need binary_little_endian)");
            saw_format = true;
        } else if (keyword == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (keyword == "property") {
            if (elements.empty())
                throw Error(ErrorKind::UnsupportedFormat, "property before element");
            std::string type;
            ls >> type;
            auto &e = elements.back();
            if (type == "list") {
                e.has_list = true;
                continue;
            }
            PlyProperty p;
            p.type = type;
            ls >> p.name;
            p.size = type_size(type);
            p.offset = e.stride;
            e.stride += p.size;
            e.properties.push_back(p);
        }
    }
    if (!saw_format)
        throw Error(ErrorKind::UnsupportedFormat, "PLY header lacks a format line");

    std::size_t skip = 0;
    const PlyElement *vertex = nullptr;
    for (const auto &e : elements) {
        if (e.name == "vertex") {
            vertex = &e;
            break;
        }
        if (e.has_list)
            throw Error(ErrorKind::UnsupportedFormat, "list element '" + e.name + "' precedes vertex data");
        skip += e.count * e.stride;
    }
    if (!vertex)
        throw Error(ErrorKind::MissingField, "no vertex element");
    if (vertex->has_list)
        throw Error(ErrorKind::UnsupportedFormat, "vertex element contains list properties");

    std::map<std::string, const PlyProperty *> by_name;
    for (const auto &p : vertex->properties)
        by_name[p.name] = &p;

    const std::array<const char *, 14> required = {"x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                                                   "scale_0", "scale_1", "scale_2", "f_dc_0", "f_dc_1",
                                                   "f_dc_2", "opacity"};
    std::string missing;
    for (const char *name : required)
        if (!by_name.count(name))
            missing += (missing.empty() ? "" : ", ") + std::string(name);
    if (!missing.empty())
        throw Error(ErrorKind::MissingField, "PLY vertex lacks: " + missing);

    if (warnings) {
        bool higher_sh = false;
        for (const auto &p : vertex->properties) {
            if (p.name.rfind("f_rest_", 0) == 0) {
                higher_sh = true;
                continue;
            }
            if (std::find_if(kPlyLayout.begin(), kPlyLayout.end(),
                             [&](const char *n) { return p.name == n; }) == kPlyLayout.end())
                warnings->push_back("ignoring unknown PLY property '" + p.name + "'");
        }
        if (higher_sh)
            warnings->push_back("ignoring higher-order SH coefficients (f_rest_*); only the DC color is used");
    }

    in.seekg(static_cast<std::streamoff>(skip), std::ios::cur);
    std::vector<char> data(vertex->count * vertex->stride);
    in.read(data.data(), static_cast<std::streamsize>(data.size()));
    if (static_cast<std::size_t>(in.gcount()) != data.size())
        throw Error(ErrorKind::IoFailure, "truncated PLY vertex data in " + path.string());

    std::array<const PlyProperty *, 14> props{};
    for (int k = 0; k < 14; ++k)
        props[static_cast<std::size_t>(k)] = by_name.at(required[static_cast<std::size_t>(k)]);

    GaussianCloud::Params params(static_cast<Eigen::Index>(vertex->count), kParamsPerGaussian);
    for (std::size_t i = 0; i < vertex->count; ++i) {
        const char *row = data.data() + i * vertex->stride;
        std::array<double, 14> raw{};
        for (std::size_t k = 0; k < 14; ++k) {
            raw[k] = read_scalar(row + props[k]->offset, props[k]->type);
            if (!std::isfinite(raw[k]))
                throw Error(ErrorKind::NonFiniteValue,
                            "gaussian " + std::to_string(i) + " property " + props[k]->name);
        }
        const auto r = static_cast<Eigen::Index>(i);
        params.row(r).segment<3>(kPositionOffset) << raw[0], raw[1], raw[2];
        Eigen::Vector4d q(raw[3], raw[4], raw[5], raw[6]);
        if (q.norm() == 0)
            throw Error(ErrorKind::NonFiniteValue, "gaussian " + std::to_string(i) + " has a zero quaternion");
        params.row(r).segment<4>(kRotationOffset) = q.normalized().transpose();
        for (int a = 0; a < 3; ++a) {
            params(r, kSx + a) = std::exp(raw[static_cast<std::size_t>(7 + a)]);
            params(r, kCr + a) = std::clamp(0.5 + kShC0 * raw[static_cast<std::size_t>(10 + a)], 0.0, 1.0);
        }
        params(r, kAlpha) = sigmoid(raw[13]);
    }
    return GaussianCloud(std::move(params));
}

void save_ply(const GaussianCloud &cloud, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << "\n";
    for (const char *name : kPlyLayout)
        out << "property float " << name << "\n";
    out << "end_header\n";

    std::vector<float> row(kPlyLayout.size());
    for (Eigen::Index j = 0; j < cloud.size(); ++j) {
        const auto &p = cloud.params();
        const Eigen::Vector4d q = cloud.rotation(j);
        const double values[17] = {
            p(j, kPx), p(j, kPy), p(j, kPz), 0.0, 0.0, 0.0,
            (p(j, kCr) - 0.5) / kShC0, (p(j, kCg) - 0.5) / kShC0, (p(j, kCb) - 0.5) / kShC0,
            logit(p(j, kAlpha)),
            std::log(p(j, kSx)), std::log(p(j, kSy)), std::log(p(j, kSz)),
            q[0], q[1], q[2], q[3],
        };
        for (std::size_t k = 0; k < row.size(); ++k)
            row[k] = static_cast<float>(values[k]);
        out.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out)
        throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

void save_json(const GaussianCloud &cloud, const std::filesystem::path &path) {
    nlohmann::json doc;
    doc["version"] = 1;
    auto &list = doc["gaussians"] = nlohmann::json::array();
    for (Eigen::Index j = 0; j < cloud.size(); ++j) {
        const Gaussian g = cloud.gaussian(j);
        list.push_back({
            {"p", {g.position[0], g.position[1], g.position[2]}},
            {"q", {g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]}},
            {"s", {g.scale[0], g.scale[1], g.scale[2]}},
            {"c", {g.color[0], g.color[1], g.color[2]}},
            {"a", g.opacity},
        });
    }
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    out << doc.dump() << "\n";
    if (!out)
        throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

GaussianCloud load_json(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::UnsupportedFormat, path.string() + ": " + e.what());
    }
    if (!doc.contains("version") || doc["version"] != 1)
        throw Error(ErrorKind::UnsupportedFormat, "unsupported cloud JSON version in " + path.string());
    if (!doc.contains("gaussians") || !doc["gaussians"].is_array())
        throw Error(ErrorKind::MissingField, "gaussians");

    const auto &list = doc["gaussians"];
    GaussianCloud::Params params(static_cast<Eigen::Index>(list.size()), kParamsPerGaussian);
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto &g = list[i];
        std::string missing;
        for (const char *key : {"p", "q", "s", "c", "a"})
            if (!g.contains(key))
                missing += (missing.empty() ? "" : ", ") + std::string(key);
        if (!missing.empty())
            throw Error(ErrorKind::MissingField, "gaussian " + std::to_string(i) + " lacks: " + missing);
        const auto r = static_cast<Eigen::Index>(i);
        try {
            for (int k = 0; k < 3; ++k) {
                params(r, kPx + k) = g["p"].at(static_cast<std::size_t>(k)).get<double>();
                params(r, kSx + k) = g["s"].at(static_cast<std::size_t>(k)).get<double>();
                params(r, kCr + k) = g["c"].at(static_cast<std::size_t>(k)).get<double>();
            }
            for (int k = 0; k < 4; ++k)
                params(r, kQw + k) = g["q"].at(static_cast<std::size_t>(k)).get<double>();
            params(r, kAlpha) = g["a"].get<double>();
        } catch (const nlohmann::json::exception &e) {
            throw Error(ErrorKind::UnsupportedFormat, "gaussian " + std::to_string(i) + ": " + e.what());
        }
        if (!params.row(r).allFinite())
            throw Error(ErrorKind::NonFiniteValue, "gaussian " + std::to_string(i));
    }
    return GaussianCloud(std::move(params));
}

GaussianCloud load_cloud(const std::filesystem::path &path, std::vector<std::string> *warnings) {
    if (path.extension() == ".json")
        return load_json(path);
    return load_ply(path, warnings);
}

void save_cloud(const GaussianCloud &cloud, const std::filesystem::path &path) {
    if (path.extension() == ".json")
        save_json(cloud, path);
    else
        save_ply(cloud, path);
}

} // namespace gaussadv
