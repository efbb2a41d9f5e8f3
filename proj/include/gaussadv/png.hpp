// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gaussadv/image.hpp"

#include <string>

namespace gaussadv {

/// 8-bit RGB PNG. Values are clamped to [0,1] and rounded to the nearest level.
void write_png(const std::string &path, const RgbImage &image);
/// Grey-scale 8-bit PNG of a single plane.
void write_png(const std::string &path, const Plane &plane);
/// Reads 8-bit or 16-bit grey/RGB(A) PNGs into [0,1]. Alpha is dropped.
RgbImage read_png(const std::string &path);

/// Little-endian single-channel PFM ("Pf"), rows stored bottom-to-top.
void write_pfm(const std::string &path, const Plane &plane);
Plane read_pfm(const std::string &path);

/// Value an 8-bit round trip maps v to.
inline double quantize8(double v) {
    const double c = v < 0 ? 0 : (v > 1 ? 1 : v);
    return static_cast<double>(static_cast<int>(c * 255.0 + 0.5)) / 255.0;
}

} // namespace gaussadv
