// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gaussadv/error.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <vector>

namespace gaussadv {

/// Pinhole camera. World-to-camera: x_cam = R x_world + T. Camera axes follow
/// the vision convention: +x right, +y down, +z forward (optical axis).
template <typename Scalar> struct BasicCameraPose {
    Eigen::Matrix<Scalar, 3, 3> rotation = Eigen::Matrix<Scalar, 3, 3>::Identity();
    Eigen::Matrix<Scalar, 3, 1> translation = Eigen::Matrix<Scalar, 3, 1>::Zero();
    Scalar focal = 1;
    Eigen::Matrix<Scalar, 2, 1> principal = Eigen::Matrix<Scalar, 2, 1>::Zero();
    int width = 1;
    int height = 1;

    Eigen::Matrix<Scalar, 3, 1> to_camera(const Eigen::Matrix<Scalar, 3, 1> &world) const {
        return rotation * world + translation;
    }
    Eigen::Matrix<Scalar, 3, 1> center() const { return -rotation.transpose() * translation; }
    Eigen::Matrix<Scalar, 3, 1> optical_axis() const { return rotation.row(2).transpose(); }
};

using CameraPose = BasicCameraPose<double>;

/// Camera at `eye` looking at `target` with world +z as up.
template <typename Scalar>
BasicCameraPose<Scalar> look_at(const Eigen::Matrix<Scalar, 3, 1> &eye, const Eigen::Matrix<Scalar, 3, 1> &target,
                                int width, int height, Scalar focal) {
    const Eigen::Matrix<Scalar, 3, 1> forward = (target - eye).normalized();
    const Eigen::Matrix<Scalar, 3, 1> up(0, 0, 1);
    Eigen::Matrix<Scalar, 3, 1> right = forward.cross(up);
    if (right.norm() < Scalar(1e-9))
        throw Error(ErrorKind::InvalidParameter, "look_at: view direction parallel to up axis");
    right.normalize();
    const Eigen::Matrix<Scalar, 3, 1> down = forward.cross(right);

    BasicCameraPose<Scalar> pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -pose.rotation * eye;
    pose.focal = focal;
    pose.principal = Eigen::Matrix<Scalar, 2, 1>(Scalar(width) / 2, Scalar(height) / 2);
    pose.width = width;
    pose.height = height;
    return pose;
}

/// Orbit sampling parameters recorded alongside the generated poses.
struct OrbitSpec {
    int azimuths = 12;
    std::vector<double> distances{3.0, 5.0, 10.0};
    double elevation_deg = 10.0;
    int resolution = 512;
    double fov_deg = 60.0;
    Eigen::Vector3d target = Eigen::Vector3d::Zero();
};

/// Viewpoint distribution realized as a finite set of look-at cameras.
/// Pose i sits at distance index i / azimuths and azimuth index i % azimuths.
struct ViewpointSet {
    std::vector<CameraPose> poses;
    std::vector<double> azimuth_deg;
    std::vector<double> distance_m;
    OrbitSpec spec;

    std::size_t size() const { return poses.size(); }
    bool empty() const { return poses.empty(); }
};

ViewpointSet make_orbit_viewpoints(const OrbitSpec &spec);

inline ViewpointSet make_orbit_viewpoints(int azimuths, const std::vector<double> &distances, double elevation_deg,
                                          int resolution, double fov_deg,
                                          const Eigen::Vector3d &target = Eigen::Vector3d::Zero()) {
    return make_orbit_viewpoints(OrbitSpec{azimuths, distances, elevation_deg, resolution, fov_deg, target});
}

/// Focal length in pixels for a horizontal field of view.
inline double focal_from_fov(int width, double fov_deg) {
    return (width / 2.0) / std::tan(fov_deg * std::numbers::pi / 360.0);
}

} // namespace gaussadv
