// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gaussadv/camera.hpp"
#include "gaussadv/gaussian.hpp"
#include "gaussadv/image.hpp"
#include "gaussadv/renderer.hpp"
#include "gaussadv/victim.hpp"

#include <limits>
#include <string>
#include <vector>

namespace gaussadv {

inline constexpr double kLcrFloor = 1e-6;
/// PSNR reported for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// ln(max(initial, floor) / max(final, floor)).
double lcr(double initial, double final, double floor = kLcrFloor);

double mse(const RgbImage &a, const RgbImage &b);
/// 10·log10(1 / MSE) for a unit peak; kPsnrIdentical when MSE is 0.
double psnr(const RgbImage &a, const RgbImage &b);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over the valid window positions of one channel.
double ssim(const Plane &a, const Plane &b, const SsimOptions &options = {});
/// Channel-averaged SSIM.
double ssim(const RgbImage &a, const RgbImage &b, const SsimOptions &options = {});

/// Mean over all pixels and channels.
double brightness(const RgbImage &image);

struct SweepCell {
    double azimuth_deg = 0;
    double distance_m = 0;
    double conf_initial = 0;
    double conf_final = 0;
    double lcr = 0;
};

struct SweepResult {
    int azimuths = 0;
    int distances = 0;
    std::vector<SweepCell> cells; ///< viewpoint order: distance-major, azimuth-minor
    double mean_lcr = 0;

    const SweepCell &at(int azimuth_index, int distance_index) const {
        return cells.at(static_cast<std::size_t>(distance_index * azimuths + azimuth_index));
    }

    std::string to_csv() const;
    std::string to_json() const;
};

/// Assembles a sweep from per-view confidences in viewpoint order.
SweepResult make_sweep(const ViewpointSet &views, const std::vector<double> &initial,
                       const std::vector<double> &final, double floor = kLcrFloor);

/// Scores un-augmented renders of both clouds from every viewpoint.
SweepResult sweep_eval(const GaussianCloud &initial, const GaussianCloud &final, const ViewpointSet &views,
                       const DifferentiableDetector &detector, const RenderOptions &options = {});

struct RealismSummary {
    double mean_psnr = 0;  ///< over views with finite PSNR; kPsnrIdentical if none
    double mean_ssim = 0;
};

/// View-matched PSNR/SSIM between renders of the two clouds.
RealismSummary realism(const GaussianCloud &initial, const GaussianCloud &final, const ViewpointSet &views,
                       const RenderOptions &options = {});

} // namespace gaussadv
