// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/augmentation.hpp"
#include "gaussadv/synthetic.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gaussadv;

namespace {

/// View with rgb in [lo, hi], alpha 1 and depth ramp in [d0, d1].
RenderedView synthetic_view(int h, int w, std::uint64_t seed, double lo = 0.2, double hi = 0.8, double d0 = 3,
                            double d1 = 10) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi), d(d0, d1);
    RenderedView v;
    v.rgb = RgbImage(h, w);
    v.alpha = Plane::Ones(h, w);
    v.depth = Plane(h, w);
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < v.rgb[c].size(); ++i)
            v.rgb[c](i) = u(rng);
    for (Eigen::Index i = 0; i < v.depth.size(); ++i)
        v.depth(i) = d(rng);
    return v;
}

struct Stats {
    double mean = 0, var = 0;
};

Stats stats(const std::vector<double> &x) {
    Stats s;
    for (double v : x)
        s.mean += v;
    s.mean /= static_cast<double>(x.size());
    for (double v : x)
        s.var += (v - s.mean) * (v - s.mean);
    s.var /= static_cast<double>(x.size() - 1);
    return s;
}

} // namespace

TEST(Augment, IdentityIsBitExactPassthrough) {
    const GaussianCloud cloud = make_synthetic_cloud({"box-car", 500, 1});
    const RenderedView v = render(cloud, make_orbit_viewpoints(1, {3}, 10, 64, 60).poses[0]);
    const AugmentConfig id = AugmentConfig::identity();
    for (std::uint64_t e = 0; e < 5; ++e) {
        const Augmented a = apply_all(v, id, e, 3);
        EXPECT_TRUE(a.view.rgb == v.rgb);
        EXPECT_TRUE((a.view.depth == v.depth).all());
    }
    Rng rng(1);
    EXPECT_TRUE(t_noise(v, id, rng).rgb == v.rgb);
    EXPECT_TRUE(t_photo(v, id, rng).rgb == v.rgb);
    EXPECT_TRUE(t_shadow(v, id, rng).rgb == v.rgb);
    EXPECT_TRUE(t_occl(v, id, rng).rgb == v.rgb);
}

TEST(Augment, DeterministicPerSubstream) {
    const RenderedView v = synthetic_view(24, 24, 1);
    const AugmentConfig cfg;
    EXPECT_TRUE(apply_all(v, cfg, 4, 7).view.rgb == apply_all(v, cfg, 4, 7).view.rgb);
    EXPECT_FALSE(apply_all(v, cfg, 4, 7).view.rgb == apply_all(v, cfg, 5, 7).view.rgb);
    EXPECT_FALSE(apply_all(v, cfg, 4, 7).view.rgb == apply_all(v, cfg, 4, 8).view.rgb);
}

TEST(Augment, NeverAltersDepthOrAlpha) {
    const RenderedView v = synthetic_view(20, 30, 2);
    AugmentConfig cfg;
    cfg.occl_probability = 1;
    const Augmented a = apply_all(v, cfg, 0, 0);
    EXPECT_TRUE((a.view.depth == v.depth).all());
    EXPECT_TRUE((a.view.alpha == v.alpha).all());
}

TEST(Augment, OutputsStayInUnitRange) {
    AugmentConfig cfg;
    cfg.sigma0 = 0.3;
    cfg.contrast_max = 3.0;
    cfg.shift_min = -0.5;
    cfg.shift_max = 0.5;
    cfg.occl_probability = 1;
    for (std::uint64_t e = 0; e < 20; ++e) {
        const Augmented a = apply_all(synthetic_view(16, 16, e, 0, 1), cfg, e, 0);
        for (int c = 0; c < 3; ++c) {
            EXPECT_GE(a.view.rgb[c].minCoeff(), 0.0);
            EXPECT_LE(a.view.rgb[c].maxCoeff(), 1.0);
        }
    }
}

TEST(Augment, NoiseStdMatchesDepthModel) {
    const AugmentConfig cfg;
    EXPECT_NEAR(noise_sigma(cfg, 10) - noise_sigma(cfg, 3), 0.035, 1e-15);
    RenderedView v;
    v.rgb = RgbImage(1, 2, 0.5);
    v.alpha = Plane::Ones(1, 2);
    v.depth = Plane(1, 2);
    v.depth << 3.0, 10.0;
    AugmentConfig noise_only = AugmentConfig::identity();
    noise_only.sigma0 = cfg.sigma0;
    noise_only.noise_gain = cfg.noise_gain;
    std::vector<double> near, far;
    for (std::uint64_t e = 0; e < 10000; ++e) {
        const Augmented a = apply_all(v, noise_only, e, 0);
        near.push_back(a.view.rgb[0](0, 0));
        far.push_back(a.view.rgb[0](0, 1));
    }
    EXPECT_NEAR(std::sqrt(stats(near).var), noise_sigma(cfg, 3), 0.05 * noise_sigma(cfg, 3));
    EXPECT_NEAR(std::sqrt(stats(far).var), noise_sigma(cfg, 10), 0.05 * noise_sigma(cfg, 10));
}

TEST(Augment, PhotometricDrawsMatchUniforms) {
    const AugmentConfig cfg;
    std::vector<double> alpha, beta;
    for (std::uint64_t e = 0; e < 10000; ++e) {
        Rng rng = augment_substream(cfg.seed, e, 0);
        const AugmentSample s = draw_sample(cfg, 2, 2, rng);
        alpha.push_back(s.contrast[0]);
        beta.push_back(s.shift[1]);
        EXPECT_TRUE(s.contrast.minCoeff() >= 0.9 && s.contrast.maxCoeff() <= 1.1);
        EXPECT_TRUE(s.shift.minCoeff() >= -0.05 && s.shift.maxCoeff() <= 0.05);
    }
    const Stats a = stats(alpha), b = stats(beta);
    EXPECT_NEAR(a.mean, 1.0, 0.01);
    EXPECT_NEAR(b.mean, 0.0, 0.005);
    EXPECT_NEAR(a.var, 0.04 / 12, 0.05 * 0.04 / 12);
    EXPECT_NEAR(b.var, 0.01 / 12, 0.05 * 0.01 / 12);
}

TEST(Augment, PhotometricAffineExample) {
    RenderedView v = synthetic_view(4, 4, 1);
    v.rgb = RgbImage(4, 4, 0.5);
    AugmentSample s;
    for (auto &n : s.noise)
        n = Plane::Zero(4, 4);
    s.contrast = Eigen::Vector3d::Constant(1.1);
    s.shift = Eigen::Vector3d::Constant(0.05);
    AugmentConfig cfg = AugmentConfig::identity();
    const Augmented a = apply_all(v, cfg, s);
    EXPECT_NEAR(a.view.rgb[0](1, 1), 0.6, 1e-15);
}

TEST(Augment, ShadowMaskProperties) {
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.shadow_strength = 0.5;
    cfg.shadow_alpha = 0.0;
    RenderedView v = synthetic_view(8, 8, 3);
    Rng rng(1);
    const RenderedView flat = t_shadow(v, cfg, rng);
    for (int c = 0; c < 3; ++c)
        EXPECT_LT((flat.rgb[c] - v.rgb[c] * 0.75).abs().maxCoeff(), 1e-15);

    // Depth ramp: mask non-decreasing in d, 0.5 exactly at d_th.
    cfg.shadow_alpha = 5.0;
    RenderedView ramp;
    ramp.rgb = RgbImage(1, 101, 1.0);
    ramp.alpha = Plane::Ones(1, 101);
    ramp.depth = Plane(1, 101);
    for (int i = 0; i <= 100; ++i)
        ramp.depth(0, i) = 3.0 + 0.07 * i;
    AugmentSample s;
    for (auto &n : s.noise)
        n = Plane::Zero(1, 101);
    s.shadow_quantile = 0.5;
    const Augmented a = apply_all(ramp, cfg, s);
    EXPECT_DOUBLE_EQ(a.trace.shadow_threshold, ramp.depth(0, 50));
    EXPECT_DOUBLE_EQ(a.trace.shadow_mask(0, 50), 0.5);
    for (int i = 0; i < 100; ++i)
        EXPECT_LE(a.trace.shadow_mask(0, i), a.trace.shadow_mask(0, i + 1));
}

TEST(Augment, ShadowThresholdIsLinearQuantile) {
    RenderedView v = synthetic_view(9, 13, 5);
    v.alpha(0, 0) = 0.2; // excluded from the object depths
    std::vector<double> d;
    for (Eigen::Index i = 0; i < v.depth.size(); ++i)
        if (v.alpha(i) > 0.5)
            d.push_back(v.depth(i));
    std::sort(d.begin(), d.end());
    for (double q : {0.0, 0.3, 0.37, 0.5, 0.7, 1.0}) {
        const double pos = q * static_cast<double>(d.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const double expected = d[lo] + (pos - static_cast<double>(lo)) * (d[std::min(lo + 1, d.size() - 1)] - d[lo]);
        EXPECT_DOUBLE_EQ(shadow_threshold(v, q), expected) << q;
    }
}

TEST(Augment, OcclusionBoundsAndCoverage) {
    AugmentConfig cfg;
    cfg.occl_probability = 1.0;
    int max_side = 0;
    double covered = 0;
    const int draws = 10000;
    for (std::uint64_t e = 0; e < draws; ++e) {
        Rng rng = augment_substream(9, e, 0);
        const AugmentSample s = draw_sample(cfg, 512, 512, rng);
        ASSERT_TRUE(s.occluded);
        max_side = std::max({max_side, s.occl_w, s.occl_h});
        EXPECT_TRUE(s.occl_x >= 0 && s.occl_x + s.occl_w <= 512 && s.occl_y >= 0 && s.occl_y + s.occl_h <= 512);
        EXPECT_TRUE(s.occl_t >= 0 && s.occl_t < 1);
        covered += static_cast<double>(s.occl_w * s.occl_h) / (512.0 * 512.0);
    }
    EXPECT_LE(max_side, 51);
    const double p2 = cfg.occl_p_size * cfg.occl_p_size;
    const double sigma = p2 / std::sqrt(static_cast<double>(draws));
    EXPECT_LE(covered / draws, p2 + 3 * sigma);

    cfg.occl_probability = 0.5;
    int hits = 0;
    for (std::uint64_t e = 0; e < draws; ++e) {
        Rng rng = augment_substream(9, e, 1);
        hits += draw_sample(cfg, 64, 64, rng).occluded ? 1 : 0;
    }
    EXPECT_NEAR(hits / static_cast<double>(draws), 0.5, 3 * std::sqrt(0.25 / draws));
}

TEST(Augment, OcclusionBlendsTowardFill) {
    RenderedView v = synthetic_view(10, 10, 4);
    AugmentConfig cfg = AugmentConfig::identity();
    cfg.occl_fill = 0.5;
    AugmentSample s;
    for (auto &n : s.noise)
        n = Plane::Zero(10, 10);
    s.occluded = true;
    s.occl_x = 2;
    s.occl_y = 3;
    s.occl_w = 4;
    s.occl_h = 5;
    s.occl_t = 0.25;
    const Augmented a = apply_all(v, cfg, s);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            const bool in = x >= 2 && x < 6 && y >= 3 && y < 8;
            const double expected = in ? v.rgb[1](y, x) * 0.75 + 0.5 * 0.25 : v.rgb[1](y, x);
            EXPECT_NEAR(a.view.rgb[1](y, x), expected, 1e-15);
        }
}

TEST(Augment, GradientMatchesFiniteDifferencesWithFrozenDraws) {
    AugmentConfig cfg;
    cfg.occl_probability = 1.0;
    cfg.occl_p_size = 0.5;
    const RenderedView v = synthetic_view(16, 16, 8, 0.25, 0.75, 3, 6);
    Rng rng = augment_substream(3, 0, 0);
    const AugmentSample s = draw_sample(cfg, 16, 16, rng);
    ASSERT_TRUE(s.occluded);

    std::mt19937_64 urng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    RgbImage up(16, 16);
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < up[c].size(); ++i)
            up[c](i) = u(urng);
    auto objective = [&](const RenderedView &in) {
        const Augmented a = apply_all(in, cfg, s);
        double acc = 0;
        for (int c = 0; c < 3; ++c)
            acc += (a.view.rgb[c] * up[c]).sum();
        return acc;
    };
    const Augmented a = apply_all(v, cfg, s);
    const AugmentGrad g = augment_backward(a.trace, cfg, up);
    const double h = 1e-6;
    double worst = 0;
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < v.rgb[c].size(); ++i) {
            RenderedView p = v, m = v;
            p.rgb[c](i) += h;
            m.rgb[c](i) -= h;
            const double fd = (objective(p) - objective(m)) / (2 * h);
            if (std::abs(g.rgb[c](i)) > 1e-6 || std::abs(fd) > 1e-6)
                worst = std::max(worst, oracle::rel_error(g.rgb[c](i), fd));
        }
    int depth_checked = 0;
    for (Eigen::Index i = 0; i < v.depth.size(); ++i) {
        RenderedView p = v, m = v;
        p.depth(i) += h;
        m.depth(i) -= h;
        // The threshold is a stop-gradient statistic; skip the order statistics it reads.
        if (shadow_threshold(p, s.shadow_quantile) != a.trace.shadow_threshold ||
            shadow_threshold(m, s.shadow_quantile) != a.trace.shadow_threshold)
            continue;
        const double fd = (objective(p) - objective(m)) / (2 * h);
        if (std::abs(g.depth(i)) > 1e-6 || std::abs(fd) > 1e-6) {
            worst = std::max(worst, oracle::rel_error(g.depth(i), fd));
            ++depth_checked;
        }
    }
    EXPECT_LT(worst, 1e-3);
    EXPECT_GT(depth_checked, 200);
}

TEST(Augment, ValidationRejectsBadConfigs) {
    AugmentConfig c;
    c.contrast_min = 0;
    EXPECT_THROW(c.validate(), Error);
    c = AugmentConfig{};
    c.occl_p_size = 1.5;
    EXPECT_THROW(c.validate(), Error);
    c = AugmentConfig{};
    c.sigma0 = -1;
    EXPECT_THROW(c.validate(), Error);
}
