// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/camera.hpp"

#include <string>

namespace gaussadv {

ViewpointSet make_orbit_viewpoints(const OrbitSpec &spec) {
    if (spec.azimuths < 1)
        throw Error(ErrorKind::InvalidParameter, "azimuth count must be >= 1");
    if (spec.distances.empty())
        throw Error(ErrorKind::InvalidParameter, "distance list is empty");
    for (double d : spec.distances)
        if (!(d > 0) || !std::isfinite(d))
            throw Error(ErrorKind::InvalidParameter, "distance must be positive, got " + std::to_string(d));
    if (spec.resolution < 1)
        throw Error(ErrorKind::InvalidParameter, "resolution must be >= 1");
    if (!(spec.fov_deg > 0 && spec.fov_deg < 180))
        throw Error(ErrorKind::InvalidParameter, "fov must lie in (0, 180) degrees");
    if (!(std::abs(spec.elevation_deg) < 90))
        throw Error(ErrorKind::InvalidParameter, "elevation must lie in (-90, 90) degrees");

    ViewpointSet set;
    set.spec = spec;
    const double focal = focal_from_fov(spec.resolution, spec.fov_deg);
    const double el = spec.elevation_deg * std::numbers::pi / 180.0;
    for (double d : spec.distances) {
        for (int a = 0; a < spec.azimuths; ++a) {
            const double az_deg = 360.0 * a / spec.azimuths;
            const double az = az_deg * std::numbers::pi / 180.0;
            const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
            set.poses.push_back(look_at<double>(spec.target + d * dir, spec.target, spec.resolution,
                                                spec.resolution, focal));
            set.azimuth_deg.push_back(az_deg);
            set.distance_m.push_back(d);
        }
    }
    return set;
}

} // namespace gaussadv
