// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "cli_config.hpp"

#include "gaussadv/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace gaussadv::cli {

namespace {

constexpr unsigned kLoads = kFilter | kAttack | kRender | kEval;
constexpr unsigned kViews = kFilter | kAttack | kRender | kEval;
constexpr unsigned kRenders = kFilter | kAttack | kRender | kEval;
constexpr unsigned kDetects = kAttack | kEval;

std::vector<OptionDef> build_registry() {
    using K = ValueKind;
    return {
        {"run", "seed", "--seed", K::Int, "7", "master seed; every random stream derives from it", kAllCommands},
        {"run", "threads", "--threads", K::Int, "0", "worker threads (0 = runtime default)", kAllCommands},
        {"run", "out", "--out", K::String, "out", "output directory", kAllCommands},

        {"io", "input", "--input", K::String, "", "input asset (.ply or .json)", kLoads},
        {"io", "output", "--output", K::String, "", "output asset, relative to --out unless absolute", kGen | kFilter | kAttack},
        {"io", "plant", "--plant", K::String, "", "planted-artifact index file (written by gen, read by filter)", kGen | kFilter},
        {"io", "report", "--report", K::String, "", "report file name, relative to --out", kFilter | kAttack | kEval},
        {"io", "adversarial", "--adversarial", K::String, "", "attacked asset scored against --input", kEval},

        {"gen", "shape", "--shape", K::String, "box-car", "box-car, sphere or plane", kGen},
        {"gen", "count", "--count", K::Int, "2000", "number of Gaussians", kGen},
        {"gen", "format", "--format", K::String, "ply", "ply or json", kGen},
        {"gen", "floaters", "--floaters", K::Int, "0", "isolated artifacts to plant", kGen},
        {"gen", "speckles", "--speckles", K::Int, "0", "surface speckle artifacts to plant", kGen},

        {"views", "azimuths", "--azimuths", K::Int, "12", "azimuth samples per ring", kViews},
        {"views", "distances", "--distances", K::RealList, "3,5,10", "ring distances in meters", kViews},
        {"views", "elevation", "--elevation", K::Real, "10", "camera elevation in degrees", kViews},
        {"views", "resolution", "--resolution", K::Int, "512", "square image size in pixels", kViews},
        {"views", "fov", "--fov", K::Real, "60", "horizontal field of view in degrees", kViews},

        {"render", "background", "--background", K::RealList, "0,0,0", "background color", kRenders},
        {"render", "near", "--near", K::Real, "0.05", "near plane in meters", kRenders},
        {"render", "far", "--far", K::Real, "20", "depth reported for uncovered pixels", kRenders},
        {"render", "dilation", "--dilation", K::Real, "0.3", "2D covariance dilation in pixels squared", kRenders},
        {"render", "cutoff", "--cutoff-sigma", K::Real, "3", "footprint radius in standard deviations", kRenders},
        {"render", "depth_epsilon", "--depth-epsilon", K::Real, "1e-4", "alpha regularizer of the depth map", kRenders},
        {"render", "augment", "--augment", K::Bool, "false", "also write augmented previews", kRender},

        {"augment", "enabled", "--aug-enabled", K::Bool, "true", "augment renders during the attack", kAttack},
        {"augment", "sigma0", "--aug-sigma0", K::Real, "0.01", "noise std at zero depth", kAttack | kRender},
        {"augment", "noise_gain", "--aug-noise-gain", K::Real, "0.005", "noise std growth per meter", kAttack | kRender},
        {"augment", "contrast_min", "--aug-contrast-min", K::Real, "0.9", "lower contrast factor", kAttack | kRender},
        {"augment", "contrast_max", "--aug-contrast-max", K::Real, "1.1", "upper contrast factor", kAttack | kRender},
        {"augment", "shift_min", "--aug-shift-min", K::Real, "-0.05", "lower brightness shift", kAttack | kRender},
        {"augment", "shift_max", "--aug-shift-max", K::Real, "0.05", "upper brightness shift", kAttack | kRender},
        {"augment", "shadow_alpha", "--aug-shadow-alpha", K::Real, "5", "shadow edge sharpness per meter", kAttack | kRender},
        {"augment", "shadow_strength", "--aug-shadow-strength", K::Real, "0.5", "darkening inside the shadow", kAttack | kRender},
        {"augment", "shadow_quantile_min", "--aug-quantile-min", K::Real, "0.3", "lower shadow depth quantile", kAttack | kRender},
        {"augment", "shadow_quantile_max", "--aug-quantile-max", K::Real, "0.7", "upper shadow depth quantile", kAttack | kRender},
        {"augment", "occl_size", "--aug-occl-size", K::Real, "0.1", "occluder side as a fraction of the image", kAttack | kRender},
        {"augment", "occl_probability", "--aug-occl-probability", K::Real, "0.5", "chance of an occluder per view", kAttack | kRender},
        {"augment", "occl_fill", "--aug-occl-fill", K::Real, "0.5", "occluder gray level", kAttack | kRender},

        {"attack", "epochs", "--epochs", K::Int, "50", "optimization epochs", kAttack},
        {"attack", "learning_rate", "--lr", K::Real, "0.03", "step size", kAttack},
        {"attack", "optimizer", "--optimizer", K::String, "adam", "adam or gd", kAttack},
        {"attack", "beta1", "--beta1", K::Real, "0.9", "Adam first-moment decay", kAttack},
        {"attack", "beta2", "--beta2", K::Real, "0.999", "Adam second-moment decay", kAttack},
        {"attack", "adam_epsilon", "--adam-epsilon", K::Real, "1e-8", "Adam denominator guard", kAttack},
        {"attack", "mask", "--mask", K::String, "full", "full, geometry, appearance or a comma list of slots", kAttack},
        {"attack", "gamma", "--gamma", K::Real, "10", "adversarial loss scale of the dynamic weights", kAttack},
        {"attack", "lambda_min", "--lambda-min", K::Real, "0.4", "lower clamp of the shape weight", kAttack},
        {"attack", "weight_epsilon", "--weight-epsilon", K::Real, "1e-8", "division guard of the dynamic weights", kAttack},
        {"attack", "lambda_shape", "--lambda-shape", K::String, "", "fixed shape weight (empty = dynamic)", kAttack},

        {"detector", "kind", "--detector", K::String, "toy", "toy or external", kDetects},
        {"detector", "spec", "--detector-spec", K::String, "", "saved toy detector; skips calibration", kDetects},
        {"detector", "seed", "--detector-seed", K::Int, "2024", "toy detector weight seed", kDetects},
        {"detector", "kernels", "--detector-kernels", K::Int, "16", "toy detector kernel count", kDetects},
        {"detector", "kernel_size", "--detector-kernel-size", K::Int, "5", "toy detector kernel side", kDetects},
        {"detector", "input_size", "--detector-input", K::Int, "64", "toy detector input side", kDetects},
        {"detector", "gain", "--detector-gain", K::Real, "500", "toy detector logit gain", kDetects},
        {"detector", "threshold", "--detector-threshold", K::Real, "0.05", "toy detector activation offset", kDetects},
        {"detector", "target", "--detector-target", K::Real, "0.8", "clean confidence after calibration", kDetects},
        {"detector", "calibration_distance", "--calibration-distance", K::Real, "5", "distance of the calibration view (azimuth 0)", kDetects},
        {"detector", "adapter", "--adapter", K::String, "", "external adapter executable", kEval},
        {"detector", "exchange_dir", "--exchange-dir", K::String, "", "adapter exchange directory; empty means <out>/exchange", kEval},
        {"detector", "timeout_ms", "--adapter-timeout-ms", K::Int, "0", "adapter timeout (0 = environment or 30000)", kEval},

        {"filter", "knn", "--knn", K::Int, "16", "neighbors per density estimate", kFilter},
        {"filter", "prune_percentile", "--prune-percentile", K::Real, "0.105", "fraction of lowest-density Gaussians removed", kFilter},
        {"filter", "sigma_gain", "--sigma-gain", K::Real, "0.01", "denoise scale growth per unit projected distance", kFilter},
        {"filter", "min_survivors", "--min-survivors", K::Int, "1", "pruning never leaves fewer Gaussians", kFilter},
        {"filter", "density_cap", "--density-cap", K::Real, "1e12", "density assigned to coincident points", kFilter},
        {"filter", "prune", "--prune", K::Bool, "true", "run topological pruning", kFilter},
        {"filter", "denoise", "--denoise", K::Bool, "true", "run structural denoising", kFilter},
    };
}

std::string trim(const std::string &s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return s.substr(b, e - b);
}

bool parse_long(const std::string &s, long &out) {
    const char *first = s.data(), *last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && !s.empty();
}

bool parse_double(const std::string &s, double &out) {
    const char *first = s.data(), *last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && !s.empty();
}

bool parse_bool(const std::string &s, bool &out) {
    std::string l = s;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (l == "true" || l == "1" || l == "yes" || l == "on") {
        out = true;
        return true;
    }
    if (l == "false" || l == "0" || l == "no" || l == "off") {
        out = false;
        return true;
    }
    return false;
}

std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> items;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        items.push_back(trim(item));
    return items;
}

[[noreturn]] void config_error(const std::string &message) { throw Error(ErrorKind::ConfigError, message); }

} // namespace

const std::vector<OptionDef> &option_registry() {
    static const std::vector<OptionDef> registry = build_registry();
    return registry;
}

const OptionDef *find_option(const std::string &section, const std::string &key) {
    for (const auto &def : option_registry())
        if (def.section == section && def.key == key)
            return &def;
    return nullptr;
}

std::string check_value(ValueKind kind, const std::string &value) {
    switch (kind) {
    case ValueKind::String: return "";
    case ValueKind::Int: {
        long v;
        return parse_long(value, v) ? "" : "expected an integer, got '" + value + "'";
    }
    case ValueKind::Real: {
        double v;
        return parse_double(value, v) ? "" : "expected a number, got '" + value + "'";
    }
    case ValueKind::Bool: {
        bool v;
        return parse_bool(value, v) ? "" : "expected true or false, got '" + value + "'";
    }
    case ValueKind::RealList: {
        for (const auto &item : split_list(value)) {
            double v;
            if (!parse_double(item, v))
                return "expected a comma-separated list of numbers, got '" + value + "'";
        }
        return "";
    }
    }
    return "unknown kind";
}

Settings::Settings() {
    for (const auto &def : option_registry())
        mValues[def.id()] = def.default_value;
}

void Settings::set(const std::string &id, const std::string &value, const std::string &origin) {
    const auto dot = id.find('.');
    const OptionDef *def = dot == std::string::npos ? nullptr : find_option(id.substr(0, dot), id.substr(dot + 1));
    if (!def)
        config_error(origin + ": unknown key '" + id + "'");
    if (const std::string msg = check_value(def->kind, value); !msg.empty())
        config_error(origin + ": [" + def->section + "] " + def->key + ": " + msg);
    mValues[id] = value;
}

void Settings::apply_ini(const std::string &text, const std::string &origin) {
    std::istringstream in(text);
    std::string line, section;
    std::set<std::string> seen;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string where = origin + ":" + std::to_string(number);
        std::string body = line;
        if (const auto hash = body.find_first_of("#;"); hash != std::string::npos)
            body = body.substr(0, hash);
        body = trim(body);
        if (body.empty())
            continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                config_error(where + ": malformed section header '" + trim(line) + "'");
            section = trim(body.substr(1, body.size() - 2));
            const bool known = std::any_of(option_registry().begin(), option_registry().end(),
                                           [&](const OptionDef &d) { return d.section == section; });
            if (!known)
                config_error(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            config_error(where + ": expected 'key = value', got '" + trim(line) + "'");
        if (section.empty())
            config_error(where + ": key outside of any section");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (!find_option(section, key))
            config_error(where + ": unknown key '" + key + "' in [" + section + "]");
        const std::string id = section + "." + key;
        if (!seen.insert(id).second)
            config_error(where + ": duplicate key '" + key + "' in [" + section + "]");
        set(id, value, where);
    }
}

void Settings::apply_ini_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        config_error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_ini(ss.str(), path);
}

const std::string &Settings::raw(const std::string &id) const {
    const auto it = mValues.find(id);
    if (it == mValues.end())
        config_error("unknown key '" + id + "'");
    return it->second;
}

long Settings::integer(const std::string &id) const {
    long v = 0;
    if (!parse_long(raw(id), v))
        config_error(id + ": expected an integer, got '" + raw(id) + "'");
    return v;
}

std::uint64_t Settings::unsigned_integer(const std::string &id) const {
    const long v = integer(id);
    if (v < 0)
        config_error(id + ": expected a non-negative integer, got '" + raw(id) + "'");
    return static_cast<std::uint64_t>(v);
}

double Settings::real(const std::string &id) const {
    double v = 0;
    if (!parse_double(raw(id), v))
        config_error(id + ": expected a number, got '" + raw(id) + "'");
    return v;
}

bool Settings::boolean(const std::string &id) const {
    bool v = false;
    if (!parse_bool(raw(id), v))
        config_error(id + ": expected true or false, got '" + raw(id) + "'");
    return v;
}

std::vector<double> Settings::real_list(const std::string &id) const {
    std::vector<double> out;
    for (const auto &item : split_list(raw(id))) {
        double v = 0;
        if (!parse_double(item, v))
            config_error(id + ": expected a list of numbers, got '" + raw(id) + "'");
        out.push_back(v);
    }
    return out;
}

std::string Settings::to_ini() const {
    std::ostringstream out;
    std::string section;
    for (const auto &def : option_registry()) {
        if (def.section != section) {
            if (!section.empty())
                out << "\n";
            section = def.section;
            out << "[" << section << "]\n";
        }
        out << def.key << " = " << raw(def.id()) << "\n";
    }
    return out.str();
}

} // namespace gaussadv::cli
