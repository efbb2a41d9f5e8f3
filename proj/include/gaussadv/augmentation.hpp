// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Physical augmentation applied to rendered views: sensor noise, photometric
// jitter, depth-driven shadow and a semi-transparent rectangular occluder,
// composed in that order. With the random draws frozen each transform is a
// differentiable function of the input rgb (and, for noise and shadow, of
// the depth map).
#pragma once

#include "gaussadv/renderer.hpp"

#include <cstdint>
#include <random>

namespace gaussadv {

struct AugmentConfig {
    double sigma0 = 0.01;      ///< noise std at zero depth
    double noise_gain = 0.005; ///< noise std growth per meter
    double contrast_min = 0.9, contrast_max = 1.1;
    double shift_min = -0.05, shift_max = 0.05;
    double shadow_alpha = 5.0;    ///< sigmoid sharpness, 1/m
    double shadow_strength = 0.5; ///< factor reached deep inside the shadow; 1 disables
    double shadow_quantile_min = 0.3, shadow_quantile_max = 0.7;
    double occl_p_size = 0.1;
    double occl_probability = 0.5;
    double occl_fill = 0.5;
    std::uint64_t seed = 0;

    /// Settings under which every transform is the identity.
    static AugmentConfig identity();

    void validate() const;
};

using Rng = std::mt19937_64;

/// Deterministic generator for one (seed, epoch, view) triple.
Rng augment_substream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t view);

/// Random draws of one augmentation pass.
struct AugmentSample {
    std::array<Plane, 3> noise; ///< standard normal per pixel and channel
    Eigen::Vector3d contrast = Eigen::Vector3d::Ones();
    Eigen::Vector3d shift = Eigen::Vector3d::Zero();
    double shadow_quantile = 0.5;
    bool occluded = false;
    int occl_x = 0, occl_y = 0, occl_w = 0, occl_h = 0;
    double occl_t = 0.0;
};

AugmentSample draw_sample(const AugmentConfig &cfg, int height, int width, Rng &rng);

/// Noise std for a pixel at depth d.
inline double noise_sigma(const AugmentConfig &cfg, double depth) { return cfg.sigma0 + cfg.noise_gain * depth; }

/// Shadow threshold: `quantile` of depths where alpha > 0.5, or far depth if none.
double shadow_threshold(const RenderedView &view, double quantile);

RenderedView t_noise(const RenderedView &view, const AugmentConfig &cfg, Rng &rng);
RenderedView t_photo(const RenderedView &view, const AugmentConfig &cfg, Rng &rng);
RenderedView t_shadow(const RenderedView &view, const AugmentConfig &cfg, Rng &rng);
RenderedView t_occl(const RenderedView &view, const AugmentConfig &cfg, Rng &rng);

/// Everything the backward pass needs from a forward augmentation.
struct AugmentTrace {
    AugmentSample sample;
    double shadow_threshold = 0.0;
    RgbImage noise_pre;   ///< before the [0,1] clamp
    RgbImage photo_pre;
    RgbImage photo_out;   ///< shadow input
    Plane shadow_mask;    ///< sigmoid value per pixel
    Plane depth;
};

struct Augmented {
    RenderedView view;
    AugmentTrace trace;
};

/// occl ∘ shadow ∘ photo ∘ noise with draws from augment_substream(seed, epoch, view_index).
Augmented apply_all(const RenderedView &view, const AugmentConfig &cfg, std::uint64_t epoch, std::uint64_t view_index);
/// Same with an explicit sample (frozen randomness).
Augmented apply_all(const RenderedView &view, const AugmentConfig &cfg, const AugmentSample &sample);

struct AugmentGrad {
    RgbImage rgb;
    Plane depth;
};

/// Pulls an upstream gradient on the augmented rgb back to the rendered rgb and depth.
AugmentGrad augment_backward(const AugmentTrace &trace, const AugmentConfig &cfg, const RgbImage &upstream);

} // namespace gaussadv
