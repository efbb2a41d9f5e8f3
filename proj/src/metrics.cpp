// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace gaussadv {

namespace {

void same_shape(const RgbImage &a, const RgbImage &b) {
    if (a.height() != b.height() || a.width() != b.width())
        throw Error(ErrorKind::DimensionMismatch, "images differ in size: " + std::to_string(a.height()) + "x" +
                                                      std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                                                      "x" + std::to_string(b.width()));
}

Eigen::VectorXd gaussian_window(int size, double sigma) {
    Eigen::VectorXd w(size);
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i)
        w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    return w / w.sum();
}

// Separable valid-mode filtering.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd &img, const Eigen::VectorXd &w) {
    const Eigen::Index n = w.size();
    const Eigen::Index rows = img.rows() - n + 1, cols = img.cols() - n + 1;
    Eigen::MatrixXd tmp = Eigen::MatrixXd::Zero(rows, img.cols());
    for (Eigen::Index i = 0; i < n; ++i)
        tmp += w[i] * img.middleRows(i, rows);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
    for (Eigen::Index i = 0; i < n; ++i)
        out += w[i] * tmp.middleCols(i, cols);
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

double lcr(double initial, double final, double floor) {
    return std::log(std::max(initial, floor) / std::max(final, floor));
}

double mse(const RgbImage &a, const RgbImage &b) {
    same_shape(a, b);
    double acc = 0;
    for (int c = 0; c < 3; ++c)
        acc += (a[c] - b[c]).square().sum();
    return acc / (3.0 * a.height() * a.width());
}

double psnr(const RgbImage &a, const RgbImage &b) {
    const double e = mse(a, b);
    if (e == 0.0)
        return kPsnrIdentical;
    return 10.0 * std::log10(1.0 / e);
}

double ssim(const Plane &a, const Plane &b, const SsimOptions &o) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorKind::DimensionMismatch, "ssim planes differ in size");
    const double c1 = (o.k1 * 1.0) * (o.k1 * 1.0), c2 = (o.k2 * 1.0) * (o.k2 * 1.0);
    // Images smaller than the window are scored with a single window spanning them.
    const int win = static_cast<int>(std::min<Eigen::Index>({o.window, a.rows(), a.cols()}));
    const Eigen::VectorXd w = gaussian_window(win, o.sigma);
    const Eigen::MatrixXd x = a.matrix(), y = b.matrix();
    const Eigen::ArrayXXd mx = filter_valid(x, w).array(), my = filter_valid(y, w).array();
    const Eigen::ArrayXXd sxx = filter_valid(x.cwiseProduct(x), w).array() - mx.square();
    const Eigen::ArrayXXd syy = filter_valid(y.cwiseProduct(y), w).array() - my.square();
    const Eigen::ArrayXXd sxy = filter_valid(x.cwiseProduct(y), w).array() - mx * my;
    const Eigen::ArrayXXd map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx.square() + my.square() + c1) * (sxx + syy + c2));
    return map.mean();
}

double ssim(const RgbImage &a, const RgbImage &b, const SsimOptions &o) {
    same_shape(a, b);
    return (ssim(a[0], b[0], o) + ssim(a[1], b[1], o) + ssim(a[2], b[2], o)) / 3.0;
}

double brightness(const RgbImage &image) { return image.mean(); }

std::string SweepResult::to_csv() const {
    std::ostringstream out;
    out << "azimuth_deg,distance_m,conf_initial,conf_final,lcr\n";
    for (const auto &c : cells)
        out << format_double(c.azimuth_deg) << ',' << format_double(c.distance_m) << ','
            << format_double(c.conf_initial) << ',' << format_double(c.conf_final) << ',' << format_double(c.lcr)
            << '\n';
    return out.str();
}

std::string SweepResult::to_json() const {
    nlohmann::json j;
    j["azimuths"] = azimuths;
    j["distances"] = distances;
    j["mean_lcr"] = mean_lcr;
    nlohmann::json grid = nlohmann::json::array();
    for (int d = 0; d < distances; ++d) {
        nlohmann::json ring;
        ring["distance_m"] = at(0, d).distance_m;
        for (int a = 0; a < azimuths; ++a) {
            const SweepCell &c = at(a, d);
            ring["azimuth_deg"].push_back(c.azimuth_deg);
            ring["conf_initial"].push_back(c.conf_initial);
            ring["conf_final"].push_back(c.conf_final);
            ring["lcr"].push_back(c.lcr);
        }
        grid.push_back(ring);
    }
    j["rings"] = grid;
    return j.dump(1);
}

SweepResult make_sweep(const ViewpointSet &views, const std::vector<double> &initial,
                       const std::vector<double> &final, double floor) {
    if (initial.size() != views.size() || final.size() != views.size())
        throw Error(ErrorKind::DimensionMismatch, "sweep needs one confidence per viewpoint");
    SweepResult r;
    r.azimuths = views.spec.azimuths;
    r.distances = static_cast<int>(views.spec.distances.size());
    if (static_cast<std::size_t>(r.azimuths * r.distances) != views.size()) {
        r.azimuths = static_cast<int>(views.size());
        r.distances = views.empty() ? 0 : 1;
    }
    double acc = 0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        SweepCell c;
        c.azimuth_deg = i < views.azimuth_deg.size() ? views.azimuth_deg[i] : 0.0;
        c.distance_m = i < views.distance_m.size() ? views.distance_m[i] : 0.0;
        c.conf_initial = initial[i];
        c.conf_final = final[i];
        c.lcr = lcr(initial[i], final[i], floor);
        acc += c.lcr;
        r.cells.push_back(c);
    }
    r.mean_lcr = views.empty() ? 0.0 : acc / static_cast<double>(views.size());
    return r;
}

SweepResult sweep_eval(const GaussianCloud &initial, const GaussianCloud &final, const ViewpointSet &views,
                       const DifferentiableDetector &detector, const RenderOptions &options) {
    std::vector<double> ci(views.size()), cf(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        ci[i] = detector.confidence(render(initial, views.poses[i], options).rgb);
        cf[i] = detector.confidence(render(final, views.poses[i], options).rgb);
    }
    return make_sweep(views, ci, cf);
}

RealismSummary realism(const GaussianCloud &initial, const GaussianCloud &final, const ViewpointSet &views,
                       const RenderOptions &options) {
    RealismSummary s;
    double psum = 0;
    std::size_t pcount = 0;
    double ssum = 0;
    for (const auto &pose : views.poses) {
        const RgbImage a = render(initial, pose, options).rgb;
        const RgbImage b = render(final, pose, options).rgb;
        const double p = psnr(a, b);
        if (std::isfinite(p)) {
            psum += p;
            ++pcount;
        }
        ssum += ssim(a, b);
    }
    s.mean_psnr = pcount ? psum / static_cast<double>(pcount) : kPsnrIdentical;
    s.mean_ssim = views.empty() ? 1.0 : ssum / static_cast<double>(views.size());
    return s;
}

} // namespace gaussadv
