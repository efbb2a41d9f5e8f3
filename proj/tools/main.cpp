// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// gaussadv command-line front end: gen, filter, attack, render, eval.
#include "cli_config.hpp"
#include "manifest.hpp"

#include "gaussadv/attack.hpp"
#include "gaussadv/augmentation.hpp"
#include "gaussadv/filtering.hpp"
#include "gaussadv/io.hpp"
#include "gaussadv/metrics.hpp"
#include "gaussadv/png.hpp"
#include "gaussadv/synthetic.hpp"
#include "gaussadv/victim.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gaussadv;
using namespace gaussadv::cli;

namespace {

constexpr std::uint64_t kPlantSalt = 0x9e3779b97f4a7c15ull;

struct CommandInfo {
    Command id;
    const char *name;
    const char *help;
};

const CommandInfo kCommands[] = {
    {kGen, "gen", "generate a synthetic asset"},
    {kFilter, "filter", "topological pruning and structural denoising"},
    {kAttack, "attack", "adversarial optimization against the toy detector"},
    {kRender, "render", "render the viewpoint grid (optionally augmented)"},
    {kEval, "eval", "confidence sweep of an attacked asset"},
};

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidParameter:
    case ErrorKind::UnknownShape: return 2;
    case ErrorKind::IoFailure:
    case ErrorKind::UnsupportedFormat:
    case ErrorKind::MissingField: return 3;
    case ErrorKind::NonFiniteValue:
    case ErrorKind::DegenerateCovariance:
    case ErrorKind::TooFewGaussians:
    case ErrorKind::UnpairedGaussian:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DimensionMismatch: return 4;
    case ErrorKind::DetectorFailure:
    case ErrorKind::AdapterTimeout:
    case ErrorKind::MalformedResponse:
    case ErrorKind::NonFiniteConfidence: return 5;
    }
    return 1;
}

class Stopwatch {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - mStart).count();
    }

private:
    std::chrono::steady_clock::time_point mStart = std::chrono::steady_clock::now();
};

struct Context {
    const Settings &s;
    RunManifest &manifest;
    fs::path out;

    std::uint64_t seed() const { return s.unsigned_integer("run.seed"); }

    fs::path output_path(const std::string &key, const std::string &fallback) const {
        const std::string name = s.str(key).empty() ? fallback : s.str(key);
        const fs::path p(name);
        return p.is_absolute() ? p : out / p;
    }

    fs::path input_path(const std::string &key) const {
        const std::string name = s.str(key);
        if (name.empty())
            throw Error(ErrorKind::ConfigError, "[" + key.substr(0, key.find('.')) + "] " +
                                                    key.substr(key.find('.') + 1) + " is required");
        if (!fs::exists(name))
            throw Error(ErrorKind::IoFailure, "input '" + name + "' does not exist");
        return name;
    }

    GaussianCloud load(const std::string &key) const {
        const fs::path p = input_path(key);
        manifest.add_input(p);
        std::vector<std::string> warnings;
        GaussianCloud cloud = load_cloud(p, &warnings);
        for (const auto &w : warnings)
            std::cerr << "warning: " << p.string() << ": " << w << "\n";
        return cloud;
    }

    void write_text(const fs::path &path, const std::string &text) const {
        manifest.add_output(path);
        std::ofstream f(path, std::ios::binary);
        if (!f || !(f << text))
            throw Error(ErrorKind::IoFailure, "cannot write '" + path.string() + "'");
    }

    void save(const GaussianCloud &cloud, const fs::path &path) const {
        manifest.add_output(path);
        save_cloud(cloud, path);
    }

    void png(const fs::path &path, const RgbImage &image) const {
        manifest.add_output(path);
        write_png(path.string(), image);
    }

    void png(const fs::path &path, const Plane &plane) const {
        manifest.add_output(path);
        write_png(path.string(), plane);
    }

    void pfm(const fs::path &path, const Plane &plane) const {
        manifest.add_output(path);
        write_pfm(path.string(), plane);
    }
};

OrbitSpec orbit_from(const Settings &s) {
    OrbitSpec o;
    o.azimuths = static_cast<int>(s.integer("views.azimuths"));
    o.distances = s.real_list("views.distances");
    o.elevation_deg = s.real("views.elevation");
    o.resolution = static_cast<int>(s.integer("views.resolution"));
    o.fov_deg = s.real("views.fov");
    return o;
}

RenderOptions render_from(const Settings &s) {
    RenderOptions r;
    const auto bg = s.real_list("render.background");
    if (bg.size() != 3)
        throw Error(ErrorKind::ConfigError, "[render] background: expected 3 components");
    r.background = Eigen::Vector3d(bg[0], bg[1], bg[2]);
    r.near_plane = s.real("render.near");
    r.far_depth = s.real("render.far");
    r.dilation = s.real("render.dilation");
    r.cutoff_sigma = s.real("render.cutoff");
    r.depth_epsilon = s.real("render.depth_epsilon");
    return r;
}

AugmentConfig augment_from(const Settings &s) {
    AugmentConfig a;
    a.sigma0 = s.real("augment.sigma0");
    a.noise_gain = s.real("augment.noise_gain");
    a.contrast_min = s.real("augment.contrast_min");
    a.contrast_max = s.real("augment.contrast_max");
    a.shift_min = s.real("augment.shift_min");
    a.shift_max = s.real("augment.shift_max");
    a.shadow_alpha = s.real("augment.shadow_alpha");
    a.shadow_strength = s.real("augment.shadow_strength");
    a.shadow_quantile_min = s.real("augment.shadow_quantile_min");
    a.shadow_quantile_max = s.real("augment.shadow_quantile_max");
    a.occl_p_size = s.real("augment.occl_size");
    a.occl_probability = s.real("augment.occl_probability");
    a.occl_fill = s.real("augment.occl_fill");
    a.validate();
    return a;
}

FilterConfig filter_from(const Settings &s) {
    FilterConfig f;
    f.k = static_cast<int>(s.integer("filter.knn"));
    f.p = s.real("filter.prune_percentile");
    f.sigma_gain = s.real("filter.sigma_gain");
    f.min_survivors = static_cast<int>(s.integer("filter.min_survivors"));
    f.density_cap = s.real("filter.density_cap");
    return f;
}

/// Tiles views into rows of `cols`.
template <typename Image, typename Get>
Image tile(std::size_t count, int cols, int h, int w, Get get, Image blank) {
    const int rows = static_cast<int>((count + static_cast<std::size_t>(cols) - 1) / static_cast<std::size_t>(cols));
    Image grid = blank;
    if constexpr (std::is_same_v<Image, RgbImage>)
        grid = RgbImage(rows * h, cols * w);
    else
        grid = Plane::Zero(rows * h, cols * w);
    for (std::size_t i = 0; i < count; ++i) {
        const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
        const auto &img = get(i);
        if constexpr (std::is_same_v<Image, RgbImage>) {
            for (int ch = 0; ch < 3; ++ch)
                grid[ch].block(r * h, c * w, h, w) = img[ch];
        } else {
            grid.block(r * h, c * w, h, w) = img;
        }
    }
    return grid;
}

ToyDetectorSpec toy_detector(const Context &ctx, const GaussianCloud &reference, const OrbitSpec &orbit,
                             const RenderOptions &ropt) {
    const Settings &s = ctx.s;
    if (!s.str("detector.spec").empty()) {
        const fs::path p = ctx.input_path("detector.spec");
        ctx.manifest.add_input(p);
        return load_toy_spec(p.string());
    }
    ToyDetectorSpec spec = make_toy_spec(s.unsigned_integer("detector.seed"), static_cast<int>(s.integer("detector.kernels")),
                                         static_cast<int>(s.integer("detector.kernel_size")),
                                         static_cast<int>(s.integer("detector.input_size")), s.real("detector.gain"),
                                         s.real("detector.threshold"));
    spec.calibration_target = s.real("detector.target");
    const ViewpointSet calib =
        make_orbit_viewpoints(1, {s.real("detector.calibration_distance")}, orbit.elevation_deg, orbit.resolution,
                              orbit.fov_deg, orbit.target);
    return calibrate_toy(spec, render(reference, calib.poses[0], ropt).rgb);
}

std::string json_number(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return std::isfinite(v) ? o.str() : "null";
}

void cmd_gen(Context &ctx) {
    const Settings &s = ctx.s;
    Stopwatch sw;
    SyntheticSpec spec{s.str("gen.shape"), static_cast<int>(s.integer("gen.count")), ctx.seed()};
    ctx.manifest.add_seed("gen", spec.seed);
    GaussianCloud cloud = make_synthetic_cloud(spec);

    const std::string format = s.str("gen.format");
    if (format != "ply" && format != "json")
        throw Error(ErrorKind::ConfigError, "[gen] format: expected ply or json, got '" + format + "'");
    const fs::path asset = ctx.output_path("io.output", "asset." + format);

    const int floaters = static_cast<int>(s.integer("gen.floaters"));
    const int speckles = static_cast<int>(s.integer("gen.speckles"));
    if (floaters < 0 || speckles < 0)
        throw Error(ErrorKind::ConfigError, "[gen] floaters/speckles must be non-negative");
    if (floaters + speckles > 0) {
        ArtifactPlan plan{floaters, speckles, ctx.seed() ^ kPlantSalt};
        ctx.manifest.add_seed("plant", plan.seed);
        PlantedCloud planted = plant_artifacts(cloud, plan);
        cloud = planted.cloud;
        nlohmann::ordered_json j;
        j["floaters"] = planted.floaters;
        j["speckles"] = planted.speckles;
        ctx.write_text(ctx.output_path("io.plant", "plant.json"), j.dump(2) + "\n");
    }
    ctx.save(cloud, asset);
    ctx.manifest.add_timing("gen", sw.ms());
    ctx.manifest.add_summary("gaussians", std::to_string(cloud.size()));
    std::cout << "wrote " << asset.string() << " (" << cloud.size() << " gaussians)\n";
}

std::vector<std::size_t> read_plant(const fs::path &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error(ErrorKind::IoFailure, "cannot read plant file '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::UnsupportedFormat, path.string() + ": " + e.what());
    }
    std::vector<std::size_t> rows;
    for (const char *key : {"floaters", "speckles"}) {
        if (!j.contains(key) || !j[key].is_array())
            throw Error(ErrorKind::MissingField, path.string() + ": missing array '" + key + "'");
        for (const auto &v : j[key])
            rows.push_back(v.get<std::size_t>());
    }
    return rows;
}

void cmd_filter(Context &ctx) {
    const Settings &s = ctx.s;
    GaussianCloud cloud = ctx.load("io.input");
    const ViewpointSet views = make_orbit_viewpoints(orbit_from(s));
    const FilterConfig fcfg = filter_from(s);
    FilterStages stages{s.boolean("filter.prune"), s.boolean("filter.denoise")};

    Stopwatch sw;
    FilterResult result = filter_cloud(cloud, views, fcfg, stages);
    ctx.manifest.add_timing("filter", sw.ms());

    nlohmann::ordered_json report;
    report["input_count"] = cloud.size();
    report["output_count"] = result.cloud.size();
    report["removed_count"] = result.removed.size();
    report["removed"] = result.removed;
    report["threshold"] = result.threshold;
    report["floor_applied"] = result.floor_applied;
    if (!s.str("io.plant").empty()) {
        const fs::path plant = ctx.input_path("io.plant");
        ctx.manifest.add_input(plant);
        const auto planted = read_plant(plant);
        for (std::size_t r : planted)
            if (r >= static_cast<std::size_t>(cloud.size()))
                throw Error(ErrorKind::InvalidParameter, "plant row " + std::to_string(r) + " is out of range");
        const double ar = artifact_removal(planted, cloud, result);
        report["planted"] = planted.size();
        report["artifact_removal"] = ar;
        ctx.manifest.add_summary("artifact_removal", json_number(ar));
        std::cout << "artifact_removal " << ar << "\n";
    }

    const fs::path asset = ctx.output_path("io.output", "filtered.ply");
    ctx.save(result.cloud, asset);
    ctx.write_text(ctx.output_path("io.report", "filter_report.json"), report.dump(2) + "\n");
    ctx.manifest.add_summary("removed", std::to_string(result.removed.size()));
    std::cout << "removed " << result.removed.size() << " of " << cloud.size() << ", wrote " << asset.string()
              << "\n";
}

void cmd_attack(Context &ctx) {
    const Settings &s = ctx.s;
    if (s.str("detector.kind") != "toy")
        throw Error(ErrorKind::ConfigError,
                    "[detector] kind: attack needs a differentiable detector, only 'toy' is supported");
    GaussianCloud cloud = ctx.load("io.input");
    const OrbitSpec orbit = orbit_from(s);
    const RenderOptions ropt = render_from(s);

    AttackConfig cfg;
    cfg.epochs = static_cast<int>(s.integer("attack.epochs"));
    cfg.learning_rate = s.real("attack.learning_rate");
    cfg.optimizer = parse_optimizer(s.str("attack.optimizer"));
    cfg.adam_beta1 = s.real("attack.beta1");
    cfg.adam_beta2 = s.real("attack.beta2");
    cfg.adam_epsilon = s.real("attack.adam_epsilon");
    cfg.mask = DimensionMask::parse(s.str("attack.mask"));
    cfg.views = make_orbit_viewpoints(orbit);
    cfg.augment = augment_from(s);
    cfg.augment_enabled = s.boolean("augment.enabled");
    cfg.detector = "toy";
    cfg.seed = ctx.seed();
    cfg.weights.gamma_scale = s.real("attack.gamma");
    cfg.weights.lambda_min = s.real("attack.lambda_min");
    cfg.weights.epsilon = s.real("attack.weight_epsilon");
    if (!s.str("attack.lambda_shape").empty())
        cfg.fixed_lambda_shape = s.real("attack.lambda_shape");
    cfg.render = ropt;
    ctx.manifest.add_seed("attack", cfg.seed);
    ctx.manifest.add_seed("augment", cfg.augment.seed ^ cfg.seed);

    Stopwatch calib;
    const ToyDetectorSpec spec = toy_detector(ctx, cloud, orbit, ropt);
    ctx.manifest.add_seed("detector", spec.seed);
    ctx.manifest.add_timing("calibrate", calib.ms());
    ToyDetector detector(spec);

    Stopwatch sw;
    AttackResult result = run_attack(cloud, cfg, detector);
    ctx.manifest.add_timing("attack", sw.ms());
    for (const auto &e : result.report.epochs)
        ctx.manifest.add_timing("epoch_" + std::to_string(e.epoch), e.wall_ms);

    const fs::path asset = ctx.output_path("io.output", "adversarial.ply");
    const fs::path report = ctx.output_path("io.report", "attack_report");
    ctx.save(result.cloud, asset);
    ctx.write_text(fs::path(report).replace_extension(".json"), result.report.to_json());
    ctx.write_text(fs::path(report).replace_extension(".csv"), result.report.to_csv());
    const fs::path det = ctx.out / "detector.json";
    ctx.manifest.add_output(det);
    save_toy_spec(spec, det.string());

    ctx.manifest.add_summary("final_lcr", json_number(result.report.final_lcr));
    ctx.manifest.add_summary("final_shape", json_number(result.report.final_shape));
    std::cout << "final_lcr " << result.report.final_lcr << " final_shape " << result.report.final_shape
              << ", wrote " << asset.string() << "\n";
}

void cmd_render(Context &ctx) {
    const Settings &s = ctx.s;
    GaussianCloud cloud = ctx.load("io.input");
    const OrbitSpec orbit = orbit_from(s);
    const ViewpointSet views = make_orbit_viewpoints(orbit);
    const RenderOptions ropt = render_from(s);
    Stopwatch sw;
    const std::vector<RenderedView> rendered = render_batch(cloud, views, ropt);
    ctx.manifest.add_timing("render", sw.ms());

    const int cols = orbit.azimuths, h = orbit.resolution, w = orbit.resolution;
    const std::size_t n = rendered.size();
    ctx.png(ctx.out / "render.png",
            tile<RgbImage>(n, cols, h, w, [&](std::size_t i) -> const RgbImage & { return rendered[i].rgb; }, {}));
    ctx.png(ctx.out / "render_alpha.png",
            tile<Plane>(n, cols, h, w, [&](std::size_t i) -> const Plane & { return rendered[i].alpha; }, {}));
    ctx.pfm(ctx.out / "render_depth.pfm",
            tile<Plane>(n, cols, h, w, [&](std::size_t i) -> const Plane & { return rendered[i].depth; }, {}));

    if (s.boolean("render.augment")) {
        AugmentConfig acfg = augment_from(s);
        acfg.seed = ctx.seed();
        ctx.manifest.add_seed("augment", acfg.seed);
        std::vector<RgbImage> aug(n);
        for (std::size_t i = 0; i < n; ++i)
            aug[i] = apply_all(rendered[i], acfg, 0, i).view.rgb;
        ctx.png(ctx.out / "render_augmented.png",
                tile<RgbImage>(n, cols, h, w, [&](std::size_t i) -> const RgbImage & { return aug[i]; }, {}));
    }
    std::size_t culled = 0;
    for (const auto &v : rendered)
        culled += v.all_culled ? 1 : 0;
    ctx.manifest.add_summary("views", std::to_string(n));
    ctx.manifest.add_summary("all_culled_views", std::to_string(culled));
    std::cout << "rendered " << n << " views to " << (ctx.out / "render.png").string() << "\n";
}

void cmd_eval(Context &ctx) {
    const Settings &s = ctx.s;
    GaussianCloud initial = ctx.load("io.input");
    GaussianCloud final = ctx.load("io.adversarial");
    const OrbitSpec orbit = orbit_from(s);
    const ViewpointSet views = make_orbit_viewpoints(orbit);
    const RenderOptions ropt = render_from(s);

    Stopwatch sw;
    SweepResult sweep;
    const std::string kind = s.str("detector.kind");
    if (kind == "toy") {
        const ToyDetectorSpec spec = toy_detector(ctx, initial, orbit, ropt);
        ctx.manifest.add_seed("detector", spec.seed);
        sweep = sweep_eval(initial, final, views, ToyDetector(spec), ropt);
    } else if (kind == "external") {
        AdapterConfig adapter;
        adapter.executable = s.str("detector.adapter");
        if (adapter.executable.empty())
            throw Error(ErrorKind::ConfigError, "[detector] adapter is required for the external detector");
        adapter.exchange_dir =
            s.str("detector.exchange_dir").empty() ? (ctx.out / "exchange").string() : s.str("detector.exchange_dir");
        if (const long t = s.integer("detector.timeout_ms"); t > 0)
            adapter.timeout_ms = static_cast<int>(t);
        auto score = [&](const GaussianCloud &cloud) {
            std::vector<RgbImage> images;
            for (const auto &v : render_batch(cloud, views, ropt))
                images.push_back(v.rgb);
            std::vector<double> out;
            for (const auto &c : external_score(images, adapter))
                out.push_back(c.value);
            return out;
        };
        const auto c0 = score(initial);
        const auto c1 = score(final);
        sweep = make_sweep(views, c0, c1);
    } else {
        throw Error(ErrorKind::ConfigError, "[detector] kind: expected toy or external, got '" + kind + "'");
    }
    const RealismSummary real = realism(initial, final, views, ropt);
    ctx.manifest.add_timing("eval", sw.ms());

    const fs::path report = ctx.output_path("io.report", "sweep");
    ctx.write_text(fs::path(report).replace_extension(".csv"), sweep.to_csv());
    ctx.write_text(fs::path(report).replace_extension(".json"), sweep.to_json());
    ctx.manifest.add_summary("mean_lcr", json_number(sweep.mean_lcr));
    ctx.manifest.add_summary("mean_psnr", json_number(real.mean_psnr));
    ctx.manifest.add_summary("mean_ssim", json_number(real.mean_ssim));
    std::cout << "mean_lcr " << sweep.mean_lcr << " psnr " << real.mean_psnr << " ssim " << real.mean_ssim << "\n";
}

std::string key_table() {
    std::ostringstream o;
    o << "Config keys (INI [section] key = value) and their flags:\n";
    for (const auto &def : option_registry())
        o << "  " << std::left << std::setw(34) << ("[" + def.section + "] " + def.key) << std::setw(26) << def.flag
          << def.help << " (default: " << (def.default_value.empty() ? "none" : def.default_value) << ")\n";
    o << "\nExit codes: 0 ok, 2 config, 3 io, 4 numeric, 5 adapter.\n";
    return o.str();
}

const char *type_name(ValueKind kind) {
    switch (kind) {
    case ValueKind::Int: return "INT";
    case ValueKind::Real: return "REAL";
    case ValueKind::Bool: return "BOOL";
    case ValueKind::RealList: return "LIST";
    case ValueKind::String: return "TEXT";
    }
    return "TEXT";
}

std::string describe(const OptionDef &def) {
    return def.help + " ([" + def.section + "] " + def.key + ")";
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"gaussadv: adversarial Gaussian splatting toolkit"};
    app.set_version_flag("--version", std::string(GAUSSADV_VERSION));
    app.require_subcommand(1);
    app.footer(key_table());

    std::string config_path;
    app.add_option("--config", config_path, "INI config file or a previous run manifest (.json)");

    std::map<std::string, std::string> given;
    std::vector<std::pair<std::string, CLI::Option *>> bound;
    auto bind = [&](CLI::App &target, const OptionDef &def) {
        std::string &slot = given[def.id()];
        CLI::Option *opt = nullptr;
        if (def.kind == ValueKind::Bool)
            opt = target.add_flag(def.flag + "{true}", slot, describe(def));
        else
            opt = target.add_option(def.flag, slot, describe(def))->type_name(type_name(def.kind));
        bound.emplace_back(def.id(), opt);
    };
    for (const auto &def : option_registry())
        if (def.section == "run")
            bind(app, def);

    std::map<std::string, CLI::App *> subs;
    for (const auto &cmd : kCommands) {
        CLI::App *sub = app.add_subcommand(cmd.name, cmd.help);
        sub->fallthrough();
        for (const auto &def : option_registry())
            if (def.section != "run" && (def.commands & cmd.id))
                bind(*sub, def);
        subs[cmd.name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const CommandInfo *cmd = nullptr;
    for (const auto &c : kCommands)
        if (subs[c.name]->parsed())
            cmd = &c;

    Settings settings;
    int code = 0;
    std::string status = "ok", error_kind, error_message;
    std::unique_ptr<RunManifest> manifest;
    fs::path out;
    try {
        try {
            if (!config_path.empty()) {
                std::ifstream f(config_path, std::ios::binary);
                if (!f)
                    throw Error(ErrorKind::ConfigError, "cannot open config file '" + config_path + "'");
                std::ostringstream text;
                text << f.rdbuf();
                if (fs::path(config_path).extension() == ".json")
                    apply_manifest_config(settings, text.str(), config_path);
                else
                    settings.apply_ini(text.str(), config_path);
            }
            for (const auto &[id, opt] : bound)
                if (opt->count() > 0)
                    settings.set(id, given[id], "flag " + opt->get_name());
        } catch (const Error &) {
            // Still record the failure next to wherever the outputs would have gone.
            manifest = std::make_unique<RunManifest>(cmd->name, settings);
            for (const auto &[id, opt] : bound)
                if (id == "run.out" && opt->count() > 0)
                    out = given[id];
            if (out.empty())
                out = settings.raw("run.out");
            throw;
        }
        out = settings.str("run.out");
        manifest = std::make_unique<RunManifest>(cmd->name, settings);
        manifest->add_seed("master", settings.unsigned_integer("run.seed"));
        if (const long threads = settings.integer("run.threads"); threads > 0)
            omp_set_num_threads(static_cast<int>(threads));
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec)
            throw Error(ErrorKind::IoFailure, "cannot create output directory '" + out.string() + "': " + ec.message());

        Context ctx{settings, *manifest, out};
        Stopwatch total;
        switch (cmd->id) {
        case kGen: cmd_gen(ctx); break;
        case kFilter: cmd_filter(ctx); break;
        case kAttack: cmd_attack(ctx); break;
        case kRender: cmd_render(ctx); break;
        case kEval: cmd_eval(ctx); break;
        default: break;
        }
        manifest->add_timing("total", total.ms());
    } catch (const Error &e) {
        code = exit_code_for(e.kind());
        status = "failed";
        error_kind = std::string(to_string(e.kind()));
        error_message = e.what();
    } catch (const std::exception &e) {
        code = 1;
        status = "failed";
        error_kind = "Internal";
        error_message = e.what();
    }
    if (code != 0) {
        std::cerr << "gaussadv " << cmd->name << ": " << error_message << "\n";
        manifest->remove_outputs();
    }

    try {
        std::error_code ec;
        fs::create_directories(out, ec);
        const fs::path mpath = out / (std::string(cmd->name) + ".manifest.json");
        std::ofstream f(mpath, std::ios::binary);
        f << manifest->to_json(status, code, error_kind, error_message);
        if (!f)
            throw Error(ErrorKind::IoFailure, "cannot write manifest '" + mpath.string() + "'");
    } catch (const std::exception &e) {
        std::cerr << "gaussadv: " << e.what() << "\n";
        if (code == 0)
            code = 3;
    }
    return code;
}
