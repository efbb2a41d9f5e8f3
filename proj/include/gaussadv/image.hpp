// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>

#include <array>

namespace gaussadv {

/// Single-channel image, rows = height, cols = width.
template <typename Scalar> using BasicPlane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = BasicPlane<double>;

/// Planar RGB image; each channel is an H×W array.
template <typename Scalar> struct BasicRgbImage {
    std::array<BasicPlane<Scalar>, 3> channels;

    BasicRgbImage() = default;
    BasicRgbImage(int height, int width, Scalar fill = 0) {
        for (auto &c : channels)
            c = BasicPlane<Scalar>::Constant(height, width, fill);
    }

    int height() const { return static_cast<int>(channels[0].rows()); }
    int width() const { return static_cast<int>(channels[0].cols()); }

    BasicPlane<Scalar> &operator[](int c) { return channels[static_cast<std::size_t>(c)]; }
    const BasicPlane<Scalar> &operator[](int c) const { return channels[static_cast<std::size_t>(c)]; }

    bool allFinite() const { return channels[0].allFinite() && channels[1].allFinite() && channels[2].allFinite(); }

    Scalar mean() const { return (channels[0].mean() + channels[1].mean() + channels[2].mean()) / Scalar(3); }

    bool operator==(const BasicRgbImage &o) const {
        for (int c = 0; c < 3; ++c)
            if ((*this)[c].rows() != o[c].rows() || (*this)[c].cols() != o[c].cols() || !((*this)[c] == o[c]).all())
                return false;
        return true;
    }
};

using RgbImage = BasicRgbImage<double>;

} // namespace gaussadv
