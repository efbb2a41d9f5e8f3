// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Procedural stand-ins for reconstructed assets. Every generated cloud is
// centered on its centroid and scaled to a 2 m bounding-box diagonal.
#pragma once

#include "gaussadv/gaussian.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gaussadv {

inline constexpr double kSyntheticDiagonal = 2.0;

struct SyntheticSpec {
    std::string shape = "box-car"; ///< "box-car", "sphere" or "plane"
    int count = 2000;
    std::uint64_t seed = 7;
};

/// Deterministic given shape, count and seed. Throws UnknownShape / InvalidParameter.
GaussianCloud make_synthetic_cloud(const SyntheticSpec &spec);

/// Known-bad primitives appended to a clean cloud so filtering can be scored.
struct ArtifactPlan {
    int floaters = 12;    ///< isolated Gaussians well outside the object
    int speckles = 48;    ///< sub-pixel, near-opaque Gaussians on the surface
    std::uint64_t seed = 11;
};

struct PlantedCloud {
    GaussianCloud cloud;
    std::vector<std::size_t> floaters; ///< row indices in `cloud`
    std::vector<std::size_t> speckles;

    std::vector<std::size_t> all_planted() const;
};

PlantedCloud plant_artifacts(const GaussianCloud &clean, const ArtifactPlan &plan);

} // namespace gaussadv
