// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gaussadv {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

// splitmix64 finalizer; decorrelates neighbouring (seed, epoch, view) keys.
std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void draw_noise(AugmentSample &s, int h, int w, Rng &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto &plane : s.noise) {
        plane.resize(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                plane(y, x) = normal(rng);
    }
}

void draw_photo(AugmentSample &s, const AugmentConfig &cfg, Rng &rng) {
    std::uniform_real_distribution<double> contrast(cfg.contrast_min, cfg.contrast_max);
    std::uniform_real_distribution<double> shift(cfg.shift_min, cfg.shift_max);
    for (int c = 0; c < 3; ++c)
        s.contrast[c] = cfg.contrast_min == cfg.contrast_max ? cfg.contrast_min : contrast(rng);
    for (int c = 0; c < 3; ++c)
        s.shift[c] = cfg.shift_min == cfg.shift_max ? cfg.shift_min : shift(rng);
}

void draw_shadow(AugmentSample &s, const AugmentConfig &cfg, Rng &rng) {
    std::uniform_real_distribution<double> q(cfg.shadow_quantile_min, cfg.shadow_quantile_max);
    s.shadow_quantile = cfg.shadow_quantile_min == cfg.shadow_quantile_max ? cfg.shadow_quantile_min : q(rng);
}

void draw_occlusion(AugmentSample &s, const AugmentConfig &cfg, int h, int w, Rng &rng) {
    s.occluded = false;
    std::bernoulli_distribution hit(cfg.occl_probability);
    if (!hit(rng))
        return;
    const int max_side = static_cast<int>(std::floor(cfg.occl_p_size * std::min(h, w)));
    if (max_side < 1)
        return;
    std::uniform_int_distribution<int> side(1, max_side);
    s.occl_w = side(rng);
    s.occl_h = side(rng);
    s.occl_x = std::uniform_int_distribution<int>(0, w - s.occl_w)(rng);
    s.occl_y = std::uniform_int_distribution<int>(0, h - s.occl_h)(rng);
    s.occl_t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    s.occluded = true;
}

void noise_forward(const RenderedView &in, const AugmentConfig &cfg, const AugmentSample &s, RgbImage &pre,
                   RenderedView &out) {
    pre = in.rgb;
    for (int c = 0; c < 3; ++c) {
        pre[c] += s.noise[static_cast<std::size_t>(c)] * (cfg.sigma0 + cfg.noise_gain * in.depth);
        out.rgb[c] = pre[c].cwiseMax(0.0).cwiseMin(1.0);
    }
}

void photo_forward(const AugmentSample &s, RgbImage &pre, RenderedView &view) {
    pre = view.rgb;
    for (int c = 0; c < 3; ++c) {
        pre[c] = view.rgb[c] * s.contrast[c] + s.shift[c];
        view.rgb[c] = pre[c].cwiseMax(0.0).cwiseMin(1.0);
    }
}

void shadow_forward(const AugmentConfig &cfg, double d_th, Plane &mask, RenderedView &view) {
    mask = ((view.depth - d_th) * cfg.shadow_alpha).unaryExpr([](double x) { return sigmoid(x); });
    const Plane factor = 1.0 + (cfg.shadow_strength - 1.0) * mask;
    for (int c = 0; c < 3; ++c)
        view.rgb[c] *= factor;
}

void occlusion_forward(const AugmentConfig &cfg, const AugmentSample &s, RenderedView &view) {
    if (!s.occluded)
        return;
    for (int c = 0; c < 3; ++c) {
        auto block = view.rgb[c].block(s.occl_y, s.occl_x, s.occl_h, s.occl_w);
        block = block * (1.0 - s.occl_t) + cfg.occl_fill * s.occl_t;
    }
}

void require(bool ok, const std::string &what) {
    if (!ok)
        throw Error(ErrorKind::InvalidParameter, "augment: " + what);
}

} // namespace

AugmentConfig AugmentConfig::identity() {
    AugmentConfig c;
    c.sigma0 = 0.0;
    c.noise_gain = 0.0;
    c.contrast_min = c.contrast_max = 1.0;
    c.shift_min = c.shift_max = 0.0;
    c.shadow_strength = 1.0;
    c.occl_probability = 0.0;
    return c;
}

void AugmentConfig::validate() const {
    require(sigma0 >= 0 && noise_gain >= 0, "noise parameters must be non-negative");
    require(contrast_min > 0 && contrast_min <= contrast_max, "contrast range must lie in (0, inf)");
    require(shift_min <= shift_max, "shift range is empty");
    require(shadow_alpha >= 0 && shadow_strength >= 0, "shadow parameters must be non-negative");
    require(0 <= shadow_quantile_min && shadow_quantile_min <= shadow_quantile_max && shadow_quantile_max <= 1,
            "shadow quantile range must lie in [0,1]");
    require(occl_p_size >= 0 && occl_p_size <= 1, "occl_p_size must lie in [0,1]");
    require(occl_probability >= 0 && occl_probability <= 1, "occl_probability must lie in [0,1]");
    require(in_unit(occl_fill), "occl_fill must lie in [0,1]");
}

Rng augment_substream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t view) {
    return Rng(mix(mix(mix(seed) ^ epoch) ^ view));
}

AugmentSample draw_sample(const AugmentConfig &cfg, int height, int width, Rng &rng) {
    AugmentSample s;
    draw_noise(s, height, width, rng);
    draw_photo(s, cfg, rng);
    draw_shadow(s, cfg, rng);
    draw_occlusion(s, cfg, height, width, rng);
    return s;
}

double shadow_threshold(const RenderedView &view, double quantile) {
    std::vector<double> depths;
    for (Eigen::Index y = 0; y < view.alpha.rows(); ++y)
        for (Eigen::Index x = 0; x < view.alpha.cols(); ++x)
            if (view.alpha(y, x) > 0.5)
                depths.push_back(view.depth(y, x));
    if (depths.empty())
        return view.depth.size() ? view.depth.maxCoeff() : 0.0;
    const double pos = std::clamp(quantile, 0.0, 1.0) * static_cast<double>(depths.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto nth = depths.begin() + static_cast<std::ptrdiff_t>(lo);
    std::nth_element(depths.begin(), nth, depths.end());
    const double below = *nth;
    const double above = lo + 1 < depths.size() ? *std::min_element(nth + 1, depths.end()) : below;
    return below + (pos - static_cast<double>(lo)) * (above - below);
}

RenderedView t_noise(const RenderedView &view, const AugmentConfig &cfg, Rng &rng) {
    AugmentSample s;
    draw_noise(s, view.height(), view.width(), rng);
    RenderedView out = view;
    RgbImage pre;
    noise_forward(view, cfg, s, pre, out);
    return out;
}

RenderedView t_photo(const RenderedView &view, const AugmentConfig &cfg, Rng &rng) {
    AugmentSample s;
    draw_photo(s, cfg, rng);
    RenderedView out = view;
    RgbImage pre;
    photo_forward(s, pre, out);
    return out;
}

RenderedView t_shadow(const RenderedView &view, const AugmentConfig &cfg, Rng &rng) {
    AugmentSample s;
    draw_shadow(s, cfg, rng);
    RenderedView out = view;
    Plane mask;
    shadow_forward(cfg, shadow_threshold(view, s.shadow_quantile), mask, out);
    return out;
}

RenderedView t_occl(const RenderedView &view, const AugmentConfig &cfg, Rng &rng) {
    AugmentSample s;
    draw_occlusion(s, cfg, view.height(), view.width(), rng);
    RenderedView out = view;
    occlusion_forward(cfg, s, out);
    return out;
}

Augmented apply_all(const RenderedView &view, const AugmentConfig &cfg, std::uint64_t epoch,
                    std::uint64_t view_index) {
    Rng rng = augment_substream(cfg.seed, epoch, view_index);
    return apply_all(view, cfg, draw_sample(cfg, view.height(), view.width(), rng));
}

Augmented apply_all(const RenderedView &view, const AugmentConfig &cfg, const AugmentSample &sample) {
    cfg.validate();
    for (const auto &n : sample.noise)
        if (n.rows() != view.height() || n.cols() != view.width())
            throw Error(ErrorKind::ShapeMismatch, "augment sample resolution differs from view");
    Augmented r;
    r.view = view;
    r.trace.sample = sample;
    r.trace.depth = view.depth;
    noise_forward(view, cfg, sample, r.trace.noise_pre, r.view);
    photo_forward(sample, r.trace.photo_pre, r.view);
    r.trace.photo_out = r.view.rgb;
    // The threshold is a sampled statistic of the clean view; it carries no gradient.
    r.trace.shadow_threshold = shadow_threshold(view, sample.shadow_quantile);
    shadow_forward(cfg, r.trace.shadow_threshold, r.trace.shadow_mask, r.view);
    occlusion_forward(cfg, sample, r.view);
    return r;
}

AugmentGrad augment_backward(const AugmentTrace &trace, const AugmentConfig &cfg, const RgbImage &upstream) {
    const AugmentSample &s = trace.sample;
    const int h = upstream.height(), w = upstream.width();
    if (h != trace.photo_out.height() || w != trace.photo_out.width())
        throw Error(ErrorKind::ShapeMismatch, "augment upstream resolution differs from trace");

    AugmentGrad g;
    g.rgb = upstream;
    g.depth = Plane::Zero(h, w);

    if (s.occluded)
        for (int c = 0; c < 3; ++c)
            g.rgb[c].block(s.occl_y, s.occl_x, s.occl_h, s.occl_w) *= 1.0 - s.occl_t;

    const Plane &m = trace.shadow_mask;
    const Plane factor = 1.0 + (cfg.shadow_strength - 1.0) * m;
    const Plane dfactor_dd = (cfg.shadow_strength - 1.0) * cfg.shadow_alpha * m * (1.0 - m);
    for (int c = 0; c < 3; ++c) {
        g.depth += g.rgb[c] * trace.photo_out[c] * dfactor_dd;
        g.rgb[c] *= factor;
    }

    for (int c = 0; c < 3; ++c) {
        const Plane pass = trace.photo_pre[c].unaryExpr([](double v) { return in_unit(v) ? 1.0 : 0.0; });
        g.rgb[c] *= pass * s.contrast[c];
    }

    for (int c = 0; c < 3; ++c) {
        const Plane pass = trace.noise_pre[c].unaryExpr([](double v) { return in_unit(v) ? 1.0 : 0.0; });
        g.rgb[c] *= pass;
        g.depth += g.rgb[c] * s.noise[static_cast<std::size_t>(c)] * cfg.noise_gain;
    }
    return g;
}

} // namespace gaussadv
