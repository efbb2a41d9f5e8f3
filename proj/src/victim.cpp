// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/victim.hpp"

#include "gaussadv/error.hpp"
#include "gaussadv/png.hpp"

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

namespace gaussadv {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_resample(int out, int in) {
    return area_resample_matrix(out, in).sparseView();
}

struct Forward {
    std::array<Plane, 3> small;
    std::vector<Plane> pre; // pre-activation per kernel
    std::vector<double> pooled;
    double logit = 0;
};

} // namespace

Eigen::MatrixXd area_resample_matrix(int out, int in) {
    if (out < 1 || in < 1)
        throw Error(ErrorKind::InvalidParameter, "resample sizes must be positive");
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(out, in);
    const double step = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        const double a = o * step, b = (o + 1) * step;
        for (int i = static_cast<int>(std::floor(a)); i < std::min(in, static_cast<int>(std::ceil(b))); ++i) {
            const double overlap = std::min<double>(b, i + 1) - std::max<double>(a, i);
            if (overlap > 0)
                r(o, i) = overlap / step;
        }
    }
    return r;
}

void ToyDetectorSpec::validate() const {
    if (kernels < 1 || kernel_size < 1 || input_size < kernel_size)
        throw Error(ErrorKind::InvalidParameter, "toy detector: bad kernel bank geometry");
    if (weights.size() != static_cast<std::size_t>(kernels) * 3 || readout.size() != static_cast<std::size_t>(kernels))
        throw Error(ErrorKind::InvalidParameter, "toy detector: weight arrays do not match kernel count");
    for (const auto &w : weights)
        if (w.size() != static_cast<std::size_t>(kernel_size * kernel_size))
            throw Error(ErrorKind::InvalidParameter, "toy detector: kernel has wrong size");
    if (!std::isfinite(gain) || !std::isfinite(bias) || !std::isfinite(threshold))
        throw Error(ErrorKind::NonFiniteValue, "toy detector gain/bias");
}

ToyDetectorSpec make_toy_spec(std::uint64_t seed, int kernels, int kernel_size, int input_size, double gain,
                              double threshold) {
    ToyDetectorSpec s;
    s.seed = seed;
    s.kernels = kernels;
    s.kernel_size = kernel_size;
    s.input_size = input_size;
    s.gain = gain;
    s.threshold = threshold;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Each kernel is a uniform spatial blob with random channel mixing whose
    // channel weights have unit L1 norm, so responses lie in [-1, 1].
    const double area = static_cast<double>(kernel_size * kernel_size);
    s.weights.resize(static_cast<std::size_t>(kernels) * 3);
    for (int q = 0; q < kernels; ++q) {
        double mix[3], l1 = 0.0;
        for (double &m : mix) {
            m = normal(rng);
            l1 += std::abs(m);
        }
        for (int c = 0; c < 3; ++c)
            s.weights[static_cast<std::size_t>(q * 3 + c)].assign(static_cast<std::size_t>(kernel_size * kernel_size),
                                                                  mix[c] / (l1 * area));
    }
    s.readout.resize(static_cast<std::size_t>(kernels));
    for (auto &v : s.readout)
        v = std::abs(normal(rng)) / std::sqrt(static_cast<double>(kernels));
    s.validate();
    return s;
}

std::string toy_spec_to_json(const ToyDetectorSpec &s) {
    nlohmann::json j;
    j["type"] = "toy";
    j["seed"] = s.seed;
    j["kernels"] = s.kernels;
    j["kernel_size"] = s.kernel_size;
    j["input_size"] = s.input_size;
    j["gain"] = s.gain;
    j["bias"] = s.bias;
    j["threshold"] = s.threshold;
    j["calibration_target"] = s.calibration_target;
    j["weights"] = s.weights;
    j["readout"] = s.readout;
    return j.dump(1);
}

ToyDetectorSpec toy_spec_from_json(const std::string &text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::UnsupportedFormat, std::string("toy detector spec: ") + e.what());
    }
    ToyDetectorSpec s;
    try {
        s.seed = j.at("seed").get<std::uint64_t>();
        s.kernels = j.at("kernels").get<int>();
        s.kernel_size = j.at("kernel_size").get<int>();
        s.input_size = j.at("input_size").get<int>();
        s.gain = j.at("gain").get<double>();
        s.bias = j.at("bias").get<double>();
        s.threshold = j.value("threshold", 0.0);
        s.calibration_target = j.value("calibration_target", 0.8);
        s.weights = j.at("weights").get<std::vector<std::vector<double>>>();
        s.readout = j.at("readout").get<std::vector<double>>();
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorKind::MissingField, std::string("toy detector spec: ") + e.what());
    }
    s.validate();
    return s;
}

void save_toy_spec(const ToyDetectorSpec &spec, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::IoFailure, "cannot write " + path);
    out << toy_spec_to_json(spec) << '\n';
}

ToyDetectorSpec load_toy_spec(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return toy_spec_from_json(ss.str());
}

ToyDetector::ToyDetector(ToyDetectorSpec spec) : mSpec(std::move(spec)) { mSpec.validate(); }

namespace {

Forward run_forward(const ToyDetectorSpec &s, const RgbImage &rgb) {
    if (rgb.height() < 1 || rgb.width() < 1)
        throw Error(ErrorKind::ShapeMismatch, "toy detector needs a non-empty image");
    const int n = s.input_size, k = s.kernel_size, m = n - k + 1;
    const auto ry = sparse_resample(n, rgb.height());
    const auto rx = sparse_resample(n, rgb.width());
    Forward f;
    for (int c = 0; c < 3; ++c) {
        const Eigen::MatrixXd rows = ry * rgb[c].matrix();
        f.small[static_cast<std::size_t>(c)] = (rows * rx.transpose()).array();
    }
    f.pre.resize(static_cast<std::size_t>(s.kernels));
    f.pooled.assign(static_cast<std::size_t>(s.kernels), 0.0);
    for (int q = 0; q < s.kernels; ++q) {
        Plane z = Plane::Zero(m, m);
        for (int c = 0; c < 3; ++c) {
            const auto &w = s.weights[static_cast<std::size_t>(q * 3 + c)];
            const Plane &in = f.small[static_cast<std::size_t>(c)];
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    z += w[static_cast<std::size_t>(dy * k + dx)] * in.block(dy, dx, m, m);
        }
        z -= s.threshold;
        f.pooled[static_cast<std::size_t>(q)] = z.cwiseMax(0.0).mean();
        f.pre[static_cast<std::size_t>(q)] = std::move(z);
    }
    double acc = 0;
    for (int q = 0; q < s.kernels; ++q)
        acc += s.readout[static_cast<std::size_t>(q)] * f.pooled[static_cast<std::size_t>(q)];
    f.logit = s.gain * acc + s.bias;
    return f;
}

} // namespace

double ToyDetector::logit(const RgbImage &rgb) const { return run_forward(mSpec, rgb).logit; }

std::vector<double> ToyDetector::features(const RgbImage &rgb) const { return run_forward(mSpec, rgb).pooled; }

double ToyDetector::confidence(const RgbImage &rgb) const { return sigmoid(logit(rgb)); }

double ToyDetector::confidence_with_grad(const RgbImage &rgb, RgbImage &grad) const {
    const Forward f = run_forward(mSpec, rgb);
    const double conf = sigmoid(f.logit);
    const int n = mSpec.input_size, k = mSpec.kernel_size, m = n - k + 1;
    const double dlogit = conf * (1.0 - conf);
    std::array<Plane, 3> gsmall;
    for (auto &g : gsmall)
        g = Plane::Zero(n, n);
    for (int q = 0; q < mSpec.kernels; ++q) {
        const double scale = dlogit * mSpec.gain * mSpec.readout[static_cast<std::size_t>(q)] / (m * m);
        const Plane gz = f.pre[static_cast<std::size_t>(q)].unaryExpr([scale](double v) { return v > 0 ? scale : 0.0; });
        for (int c = 0; c < 3; ++c) {
            const auto &w = mSpec.weights[static_cast<std::size_t>(q * 3 + c)];
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    gsmall[static_cast<std::size_t>(c)].block(dy, dx, m, m) += w[static_cast<std::size_t>(dy * k + dx)] * gz;
        }
    }
    const auto ry = sparse_resample(n, rgb.height());
    const auto rx = sparse_resample(n, rgb.width());
    grad = RgbImage(rgb.height(), rgb.width());
    for (int c = 0; c < 3; ++c) {
        const Eigen::MatrixXd cols = gsmall[static_cast<std::size_t>(c)].matrix() * rx;
        grad[c] = (ry.transpose() * cols).array();
    }
    return conf;
}

double ToyDetector::lipschitz_bound(int height, int width) const {
    const int n = mSpec.input_size, m = n - mSpec.kernel_size + 1;
    // One input pixel spreads a total weight of at most (column sum of Ry)·(column sum of Rx).
    const double spread = area_resample_matrix(n, height).colwise().sum().maxCoeff() *
                          area_resample_matrix(n, width).colwise().sum().maxCoeff();
    double acc = 0;
    for (int q = 0; q < mSpec.kernels; ++q) {
        double worst = 0;
        for (int c = 0; c < 3; ++c) {
            double l1 = 0;
            for (double v : mSpec.weights[static_cast<std::size_t>(q * 3 + c)])
                l1 += std::abs(v);
            worst = std::max(worst, l1);
        }
        acc += std::abs(mSpec.readout[static_cast<std::size_t>(q)]) * worst;
    }
    return 0.25 * std::abs(mSpec.gain) * acc * spread / (static_cast<double>(m) * m);
}

ToyDetectorSpec calibrate_toy(ToyDetectorSpec spec, const RgbImage &reference) {
    spec.bias = 0.0;
    const ToyDetector det(spec);
    const double base = det.logit(reference);
    const double target = spec.calibration_target;
    if (!(target > 0 && target < 1))
        throw Error(ErrorKind::InvalidParameter, "calibration target must lie in (0,1)");
    // confidence is monotone in the bias; bracket generously and bisect.
    double lo = -base - 100.0, hi = -base + 100.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sigmoid(base + mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    spec.bias = hi;
    return spec;
}

int AdapterConfig::effective_timeout_ms() const {
    if (timeout_ms)
        return *timeout_ms;
    if (const char *env = std::getenv("GAUSSADV_ADAPTER_TIMEOUT_MS")) {
        char *end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0)
            return static_cast<int>(v);
        throw Error(ErrorKind::ConfigError, "GAUSSADV_ADAPTER_TIMEOUT_MS must be a positive integer");
    }
    return 30000;
}

namespace {

// JSON has no literal for NaN/Infinity; quote such tokens so they reach the
// finiteness check instead of failing as a parse error.
std::string quote_nonfinite(const std::string &line) {
    static const char *tokens[] = {"-Infinity", "Infinity", "NaN", "-inf", "inf", "nan"};
    std::string out;
    bool in_string = false;
    for (std::size_t i = 0; i < line.size();) {
        const char ch = line[i];
        if (ch == '"' && (i == 0 || line[i - 1] != '\\'))
            in_string = !in_string;
        if (!in_string) {
            bool matched = false;
            for (const char *t : tokens) {
                const std::size_t len = std::strlen(t);
                if (line.compare(i, len, t) == 0) {
                    out += '"';
                    out += t;
                    out += '"';
                    i += len;
                    matched = true;
                    break;
                }
            }
            if (matched)
                continue;
        }
        out += ch;
        ++i;
    }
    return out;
}

} // namespace

std::vector<ConfidenceScore> parse_scores(const std::string &jsonl, std::size_t count) {
    std::vector<std::optional<ConfidenceScore>> slots(count);
    std::istringstream in(jsonl);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(quote_nonfinite(line));
        } catch (const nlohmann::json::exception &) {
            throw Error(ErrorKind::MalformedResponse, "scores.jsonl line " + std::to_string(lineno) + " is not JSON");
        }
        if (!j.is_object() || !j.contains("index") || !j["index"].is_number_integer() || !j.contains("confidence"))
            throw Error(ErrorKind::MalformedResponse,
                        "scores.jsonl line " + std::to_string(lineno) + " needs integer index and confidence");
        const long idx = j["index"].get<long>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= count)
            throw Error(ErrorKind::MalformedResponse, "scores.jsonl index " + std::to_string(idx) + " out of range");
        if (slots[static_cast<std::size_t>(idx)])
            throw Error(ErrorKind::MalformedResponse, "scores.jsonl index " + std::to_string(idx) + " repeated");
        ConfidenceScore s;
        const auto &c = j["confidence"];
        if (c.is_number())
            s.value = c.get<double>();
        else if (c.is_string())
            s.value = std::strtod(c.get<std::string>().c_str(), nullptr);
        else
            throw Error(ErrorKind::MalformedResponse, "confidence of index " + std::to_string(idx) + " is not a number");
        if (!std::isfinite(s.value))
            throw Error(ErrorKind::NonFiniteConfidence, "index " + std::to_string(idx));
        if (s.value < 0 || s.value > 1)
            throw Error(ErrorKind::MalformedResponse,
                        "confidence of index " + std::to_string(idx) + " outside [0,1]");
        if (j.contains("label") && j["label"].is_string())
            s.label = j["label"].get<std::string>();
        slots[static_cast<std::size_t>(idx)] = s;
    }
    std::vector<ConfidenceScore> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!slots[i])
            throw Error(ErrorKind::MalformedResponse, "scores.jsonl has no entry for index " + std::to_string(i));
        out.push_back(*slots[i]);
    }
    return out;
}

std::vector<ConfidenceScore> external_score(const std::vector<RgbImage> &views, const AdapterConfig &config) {
    namespace fs = std::filesystem;
    if (config.executable.empty() || config.exchange_dir.empty())
        throw Error(ErrorKind::ConfigError, "adapter needs an executable and an exchange directory");
    const int timeout = config.effective_timeout_ms();
    const fs::path dir(config.exchange_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorKind::IoFailure, "cannot create " + dir.string());
    fs::remove(dir / "scores.jsonl", ec);

    int res_h = views.empty() ? 0 : views.front().height(), res_w = views.empty() ? 0 : views.front().width();
    for (std::size_t i = 0; i < views.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%04zu.png", i);
        write_png((dir / name).string(), views[i]);
    }
    {
        nlohmann::json manifest;
        manifest["count"] = views.size();
        manifest["resolution"] = {res_w, res_h};
        std::ofstream out(dir / "manifest.json");
        out << manifest.dump() << '\n';
        if (!out)
            throw Error(ErrorKind::IoFailure, "cannot write adapter manifest");
    }

    const pid_t pid = fork();
    if (pid < 0)
        throw Error(ErrorKind::IoFailure, "fork failed");
    if (pid == 0) {
        const std::string d = dir.string();
        execl(config.executable.c_str(), config.executable.c_str(), d.c_str(), static_cast<char *>(nullptr));
        _exit(127);
    }
    const auto start = std::chrono::steady_clock::now();
    int status = 0;
    for (;;) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid)
            break;
        if (r < 0)
            throw Error(ErrorKind::IoFailure, "waitpid failed");
        const auto elapsed =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > timeout) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw Error(ErrorKind::AdapterTimeout, "adapter exceeded " + std::to_string(timeout) + " ms");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw Error(ErrorKind::DetectorFailure,
                    "adapter exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));

    std::ifstream in(dir / "scores.jsonl");
    if (!in)
        throw Error(ErrorKind::MalformedResponse, "adapter wrote no scores.jsonl");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scores(ss.str(), views.size());
}

} // namespace gaussadv
