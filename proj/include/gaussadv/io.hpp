// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gaussadv/gaussian.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gaussadv {

/// Zeroth-order spherical harmonic basis constant, c = 0.5 + kShC0 * f_dc.
inline constexpr double kShC0 = 0.28209479177387814;

/// Reads a binary little-endian 3DGS PLY. Scales are stored as natural log,
/// opacity as logit and color as the SH DC coefficient. Warnings about ignored
/// properties (normals are expected, anything else is reported) are appended
/// to `warnings` when given.
GaussianCloud load_ply(const std::filesystem::path &path, std::vector<std::string> *warnings = nullptr);

/// Writes the exact property layout x,y,z,nx,ny,nz,f_dc_0..2,opacity,scale_0..2,rot_0..3 as float32.
void save_ply(const GaussianCloud &cloud, const std::filesystem::path &path);

/// JSON form with raw (unencoded) fields: {"version":1,"gaussians":[{"p","q","s","c","a"}]}.
void save_json(const GaussianCloud &cloud, const std::filesystem::path &path);
GaussianCloud load_json(const std::filesystem::path &path);

/// Dispatches on extension (.ply or .json).
GaussianCloud load_cloud(const std::filesystem::path &path, std::vector<std::string> *warnings = nullptr);
void save_cloud(const GaussianCloud &cloud, const std::filesystem::path &path);

} // namespace gaussadv
