// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations shared by the unit tests and the
// acceptance binary.
#pragma once

#include "gaussadv/filtering.hpp"
#include "gaussadv/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace gaussadv::oracle {

struct GradCheck {
    int checked = 0;         ///< entries with |analytic| above the floor
    int failed = 0;          ///< entries with relative error at or above the tolerance
    double max_rel_error = 0;
    double max_abs_zero = 0; ///< largest |fd| among entries skipped by the floor
};

inline double rel_error(double analytic, double numeric) {
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    return denom == 0 ? 0 : std::abs(analytic - numeric) / denom;
}

inline double mean_rgb(const RenderedView &v) {
    return (v.rgb[0].sum() + v.rgb[1].sum() + v.rgb[2].sum()) / (3.0 * v.rgb[0].size());
}

/// Central differences of mean(rgb) against render_with_grad for every parameter.
inline GradCheck renderer_grad_check(const GaussianCloud &cloud, const CameraPose &pose, double h = 1e-4,
                                     double floor = 1e-6, double tolerance = 1e-3,
                                     const RenderOptions &options = {}) {
    const double n = 3.0 * pose.width * pose.height;
    const RgbImage upstream(pose.height, pose.width, 1.0 / n);
    const ParamGradients g = render_with_grad(cloud, pose, upstream, options);
    GradCheck out;
    for (Eigen::Index j = 0; j < cloud.size(); ++j) {
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            GaussianCloud plus = cloud, minus = cloud;
            plus.params()(j, k) += h;
            minus.params()(j, k) -= h;
            const double fd = (mean_rgb(render(plus, pose, options)) - mean_rgb(render(minus, pose, options))) / (2 * h);
            const double a = g(j, k);
            if (std::abs(a) <= floor) {
                out.max_abs_zero = std::max(out.max_abs_zero, std::abs(fd));
                continue;
            }
            ++out.checked;
            const double e = rel_error(a, fd);
            out.max_rel_error = std::max(out.max_rel_error, e);
            if (e >= tolerance)
                ++out.failed;
        }
    }
    return out;
}

/// k / (4/3 π r_k³) from a brute-force scan of all pairs.
inline std::vector<double> brute_force_density(const std::vector<Eigen::Vector3d> &pts, int k, double cap) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (j != i)
                d.push_back((pts[i] - pts[j]).norm());
        std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
        const double r = d[static_cast<std::size_t>(k - 1)];
        const double v = k / (4.0 / 3.0 * std::numbers::pi * r * r * r);
        out[i] = (r == 0 || !std::isfinite(v)) ? cap : std::min(v, cap);
    }
    return out;
}

} // namespace gaussadv::oracle
