// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Physical filtering: density-based topological pruning and camera-aware
// structural denoising of scales and opacities.
#pragma once

#include "gaussadv/camera.hpp"
#include "gaussadv/gaussian.hpp"

#include <cstddef>
#include <vector>

namespace gaussadv {

struct FilterConfig {
    int k = 16;
    double p = 0.105;
    double sigma_gain = 0.01;
    std::size_t min_survivors = 1;
    /// Density reported when the k-th neighbour coincides with the query point.
    double density_cap = 1e12;

    void validate() const;
};

/// k nearest neighbours of every point, excluding the point itself, ordered
/// by (distance, index).
struct Neighbors {
    std::vector<std::vector<std::size_t>> index;
    std::vector<std::vector<double>> squared_distance;
};

/// kd-tree search.
Neighbors knn(const std::vector<Eigen::Vector3d> &points, int k);
/// O(N²) reference with identical ordering rules.
Neighbors knn_exhaustive(const std::vector<Eigen::Vector3d> &points, int k);

std::vector<Eigen::Vector3d> positions(const GaussianCloud &cloud);

/// ρ_j = k / (4/3 π r_k³) with r_k the distance to the k-th neighbour.
std::vector<double> density_from_neighbors(const Neighbors &nb, int k, double cap = 1e12);
/// Throws TooFewGaussians unless N > k.
std::vector<double> local_density(const GaussianCloud &cloud, int k, double cap = 1e12);
std::vector<double> local_density_exhaustive(const GaussianCloud &cloud, int k, double cap = 1e12);

struct PruneResult {
    GaussianCloud cloud;
    IndexMap map;                        ///< survivor row -> input row
    std::vector<std::size_t> removed;    ///< input rows, ascending
    std::vector<double> density;         ///< per input row
    double threshold = 0.0;              ///< lowest surviving density
    bool floor_applied = false;          ///< min_survivors overrode the quantile
};

/// Removes the ⌊pN⌋ lowest-density Gaussians (ties broken by index), which
/// is the set {ρ < τ_d} whenever densities are distinct.
PruneResult topological_prune(const GaussianCloud &cloud, const FilterConfig &config);

/// σ_j = sigma_gain · min_i ‖R_i x_j + T_i‖ / f_i.
std::vector<double> denoise_sigma(const GaussianCloud &cloud, const ViewpointSet &views, double sigma_gain);

/// s' = √(s² + σ²) per axis, α' = α ∏s / ∏s'.
GaussianCloud structural_denoise(const GaussianCloud &cloud, const ViewpointSet &views, const FilterConfig &config);

struct FilterStages {
    bool prune = true;
    bool denoise = true;
};

struct FilterResult {
    GaussianCloud cloud;
    IndexMap map;
    std::vector<std::size_t> removed;
    double threshold = 0.0;
    bool floor_applied = false;
};

FilterResult filter_cloud(const GaussianCloud &cloud, const ViewpointSet &views, const FilterConfig &config,
                          FilterStages stages = {});

/// Fraction of planted rows that were pruned or whose opacity fell to at most
/// `suppress_ratio` of its input value.
double artifact_removal(const std::vector<std::size_t> &planted, const GaussianCloud &before,
                        const FilterResult &after, double suppress_ratio = 0.5);

} // namespace gaussadv
