// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable EWA splatting. Forward: project every Gaussian through a
// pinhole camera, composite front-to-back in global camera-depth order.
// Backward: hand-derived reverse mode through compositing, the 2D
// projection, covariance construction and the quaternion-to-rotation map.
#pragma once

#include "gaussadv/camera.hpp"
#include "gaussadv/gaussian.hpp"
#include "gaussadv/image.hpp"

#include <vector>

namespace gaussadv {

struct RenderOptions {
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    double near_plane = 0.05;
    /// Depth reported for uncovered pixels.
    double far_depth = 20.0;
    /// Low-pass dilation added to every 2D covariance (pixel²).
    double dilation = 0.3;
    /// Footprints end at this Mahalanobis radius.
    double cutoff_sigma = 3.0;
    /// Regularizer of the alpha-normalized depth, see RenderedView::depth.
    double depth_epsilon = 1e-4;
    /// Compositing stops once transmittance drops below this.
    double min_transmittance = 1e-10;
};

struct RenderedView {
    RgbImage rgb;
    Plane alpha;
    /// (Σ wᵢTᵢzᵢ + ε·far) / (alpha + ε): the alpha-weighted mean center depth of
    /// contributing Gaussians, continuously falling back to `far_depth`.
    Plane depth;
    /// Every Gaussian was culled (behind the camera or outside the frustum).
    bool all_culled = false;

    int height() const { return rgb.height(); }
    int width() const { return rgb.width(); }
};

/// Per-Gaussian 14-vectors laid out like GaussianCloud::params().
using ParamGradients = ParamMatrix<double>;

/// Cotangents of a scalar objective with respect to the rendered channels.
/// Null members are treated as zero.
struct ViewCotangent {
    const RgbImage *rgb = nullptr;
    const Plane *alpha = nullptr;
    const Plane *depth = nullptr;
};

RenderedView render(const GaussianCloud &cloud, const CameraPose &pose, const RenderOptions &options = {});

/// Gradient of Σ upstream ⊙ rgb with respect to every parameter.
ParamGradients render_with_grad(const GaussianCloud &cloud, const CameraPose &pose, const RgbImage &upstream,
                                const RenderOptions &options = {});

ParamGradients render_with_grad(const GaussianCloud &cloud, const CameraPose &pose, const ViewCotangent &upstream,
                                const RenderOptions &options = {});

std::vector<RenderedView> render_batch(const GaussianCloud &cloud, const ViewpointSet &views,
                                       const RenderOptions &options = {});

/// Footprint weight profile as a function of the squared Mahalanobis distance:
/// a Gaussian minus its tangent at the cutoff, rescaled to 1 at the center, so
/// value and slope both vanish at the cutoff.
double footprint_profile(double mahalanobis_sq, double cutoff_sigma = 3.0);

} // namespace gaussadv
