// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gaussadv/error.hpp"
#include "gaussadv/quaternion.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace gaussadv {

/// Number of scalars per primitive: position 3, rotation 4, scale 3, color 3, opacity 1.
inline constexpr int kParamsPerGaussian = 14;

/// Slot indices of the per-Gaussian parameter row. The order is the layout of
/// GaussianCloud::params() and of every gradient matrix.
enum ParamSlot : int {
    kPx = 0, kPy, kPz,
    kQw, kQx, kQy, kQz,
    kSx, kSy, kSz,
    kCr, kCg, kCb,
    kAlpha,
};

inline constexpr int kPositionOffset = kPx;
inline constexpr int kRotationOffset = kQw;
inline constexpr int kScaleOffset = kSx;
inline constexpr int kColorOffset = kCr;

/// Smallest scale the optimizer lets an axis shrink to.
inline constexpr double kMinScale = 1e-4;

template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar> struct BasicGaussian {
    Vec3<Scalar> position = Vec3<Scalar>::Zero();
    Quat<Scalar> rotation = quat_identity<Scalar>();
    Vec3<Scalar> scale = Vec3<Scalar>::Ones();
    Vec3<Scalar> color = Vec3<Scalar>::Constant(Scalar(0.5));
    Scalar opacity = 1;
};

template <typename Scalar>
using ParamMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, kParamsPerGaussian, Eigen::RowMajor>;

/// Ordered set of Gaussians stored as an N×14 parameter matrix. Row j is
/// primitive j; the row order is stable across optimization.
template <typename Scalar> class BasicGaussianCloud {
public:
    using Params = ParamMatrix<Scalar>;

    BasicGaussianCloud() = default;
    explicit BasicGaussianCloud(Params params) : mParams(std::move(params)) {}
    explicit BasicGaussianCloud(const std::vector<BasicGaussian<Scalar>> &gaussians) {
        mParams.resize(static_cast<Eigen::Index>(gaussians.size()), kParamsPerGaussian);
        for (std::size_t j = 0; j < gaussians.size(); ++j)
            set(static_cast<Eigen::Index>(j), gaussians[j]);
    }

    Eigen::Index size() const { return mParams.rows(); }
    bool empty() const { return mParams.rows() == 0; }

    const Params &params() const { return mParams; }
    Params &params() { return mParams; }

    auto position(Eigen::Index j) const { return mParams.row(j).template segment<3>(kPositionOffset).transpose(); }
    auto position(Eigen::Index j) { return mParams.row(j).template segment<3>(kPositionOffset).transpose(); }
    auto rotation(Eigen::Index j) const { return mParams.row(j).template segment<4>(kRotationOffset).transpose(); }
    auto rotation(Eigen::Index j) { return mParams.row(j).template segment<4>(kRotationOffset).transpose(); }
    auto scale(Eigen::Index j) const { return mParams.row(j).template segment<3>(kScaleOffset).transpose(); }
    auto scale(Eigen::Index j) { return mParams.row(j).template segment<3>(kScaleOffset).transpose(); }
    auto color(Eigen::Index j) const { return mParams.row(j).template segment<3>(kColorOffset).transpose(); }
    auto color(Eigen::Index j) { return mParams.row(j).template segment<3>(kColorOffset).transpose(); }
    Scalar opacity(Eigen::Index j) const { return mParams(j, kAlpha); }
    Scalar &opacity(Eigen::Index j) { return mParams(j, kAlpha); }

    BasicGaussian<Scalar> gaussian(Eigen::Index j) const {
        BasicGaussian<Scalar> g;
        g.position = position(j);
        g.rotation = rotation(j);
        g.scale = scale(j);
        g.color = color(j);
        g.opacity = opacity(j);
        return g;
    }

    void set(Eigen::Index j, const BasicGaussian<Scalar> &g) {
        position(j) = g.position;
        rotation(j) = g.rotation;
        scale(j) = g.scale;
        color(j) = g.color;
        opacity(j) = g.opacity;
    }

    Vec3<Scalar> centroid() const {
        if (empty())
            return Vec3<Scalar>::Zero();
        return mParams.template leftCols<3>().colwise().mean().transpose();
    }

    /// Subset in the given order; used by pruning.
    BasicGaussianCloud select(const std::vector<std::size_t> &rows) const {
        Params out(static_cast<Eigen::Index>(rows.size()), kParamsPerGaussian);
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) = mParams.row(static_cast<Eigen::Index>(rows[i]));
        return BasicGaussianCloud(std::move(out));
    }

    bool operator==(const BasicGaussianCloud &other) const {
        return mParams.rows() == other.mParams.rows() && mParams == other.mParams;
    }

private:
    Params mParams = Params(0, kParamsPerGaussian);
};

using Gaussian = BasicGaussian<double>;
using GaussianCloud = BasicGaussianCloud<double>;

/// Pairing of a derived cloud's rows with rows of the cloud it came from:
/// `source[new_index] == old_index`.
struct IndexMap {
    std::vector<std::size_t> source;

    static IndexMap identity(std::size_t n) {
        IndexMap m;
        m.source.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            m.source[i] = i;
        return m;
    }

    /// Inverse lookup, -1 for removed rows.
    std::vector<long> old_to_new(std::size_t old_count) const {
        std::vector<long> out(old_count, -1);
        for (std::size_t i = 0; i < source.size(); ++i)
            out[source[i]] = static_cast<long>(i);
        return out;
    }

    /// Composition: `this` maps c→b, `inner` maps b→a; result maps c→a.
    IndexMap compose(const IndexMap &inner) const {
        IndexMap m;
        m.source.reserve(source.size());
        for (auto s : source)
            m.source.push_back(inner.source.at(s));
        return m;
    }
};

/// Renormalizes quaternions and clamps scale/color/opacity into their valid
/// ranges. Only touches rows whose values are out of range or non-unit.
template <typename Scalar> void project_to_valid(BasicGaussianCloud<Scalar> &cloud, bool rotations = true) {
    auto &p = cloud.params();
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
        if (rotations) {
            auto q = cloud.rotation(j);
            const Scalar n = q.norm();
            if (n > 0 && n != Scalar(1))
                q /= n;
        }
        for (int k = kSx; k <= kSz; ++k)
            p(j, k) = std::max<Scalar>(p(j, k), Scalar(kMinScale));
        for (int k = kCr; k <= kAlpha; ++k)
            p(j, k) = std::clamp<Scalar>(p(j, k), 0, 1);
    }
}

/// Checks the type invariants; throws InvalidParameter naming the first offender.
template <typename Scalar> void validate(const BasicGaussianCloud<Scalar> &cloud, Scalar tol = Scalar(1e-6)) {
    const auto &p = cloud.params();
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
        if (!p.row(j).allFinite())
            throw Error(ErrorKind::NonFiniteValue, "gaussian " + std::to_string(j));
        if (std::abs(cloud.rotation(j).norm() - 1) > tol)
            throw Error(ErrorKind::InvalidParameter, "gaussian " + std::to_string(j) + ": rotation not unit");
        if ((cloud.scale(j).array() <= 0).any())
            throw Error(ErrorKind::InvalidParameter, "gaussian " + std::to_string(j) + ": non-positive scale");
        if ((p.row(j).template segment<4>(kCr).array() < 0).any() ||
            (p.row(j).template segment<4>(kCr).array() > 1).any())
            throw Error(ErrorKind::InvalidParameter, "gaussian " + std::to_string(j) + ": color/opacity outside [0,1]");
    }
}

} // namespace gaussadv
