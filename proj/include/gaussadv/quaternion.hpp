// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Quaternions are plain 4-vectors in scalar-first order (w, x, y, z). They are
// deliberately not Eigen::Quaternion: the optimizer steps them as raw
// parameters, so they are frequently non-unit between renormalizations.
#pragma once

#include <Eigen/Core>

#include <cmath>

namespace gaussadv {

template <typename Scalar> using Quat = Eigen::Matrix<Scalar, 4, 1>;

template <typename Scalar> Quat<Scalar> quat_identity() { return Quat<Scalar>(1, 0, 0, 0); }

/// Hamilton product a ⊗ b.
template <typename DerivedA, typename DerivedB>
Quat<typename DerivedA::Scalar> quat_mul(const Eigen::MatrixBase<DerivedA> &a,
                                         const Eigen::MatrixBase<DerivedB> &b) {
    using Scalar = typename DerivedA::Scalar;
    return Quat<Scalar>(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

template <typename Derived>
Quat<typename Derived::Scalar> quat_conjugate(const Eigen::MatrixBase<Derived> &q) {
    return Quat<typename Derived::Scalar>(q[0], -q[1], -q[2], -q[3]);
}

/// q⁻¹ = q* / ‖q‖². Undefined for the zero quaternion.
template <typename Derived>
Quat<typename Derived::Scalar> quat_inverse(const Eigen::MatrixBase<Derived> &q) {
    return quat_conjugate(q) / q.squaredNorm();
}

/// Matrix of right multiplication: quat_mul(q, r) == quat_right_matrix(r) * q.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 4, 4> quat_right_matrix(const Eigen::MatrixBase<Derived> &r) {
    Eigen::Matrix<typename Derived::Scalar, 4, 4> m;
    m << r[0], -r[1], -r[2], -r[3],
         r[1], r[0], r[3], -r[2],
         r[2], -r[3], r[0], r[1],
         r[3], r[2], -r[1], r[0];
    return m;
}

/// Rotation matrix of the normalized quaternion q / ‖q‖.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 3> quat_to_rotation(const Eigen::MatrixBase<Derived> &q) {
    using Scalar = typename Derived::Scalar;
    const Quat<Scalar> n = q.normalized();
    const Scalar w = n[0], x = n[1], y = n[2], z = n[3];
    Eigen::Matrix<Scalar, 3, 3> r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Reverse-mode companion of quat_to_rotation: maps dL/dR to dL/dq for the
/// unnormalized input q, including the normalization Jacobian.
template <typename DerivedQ, typename DerivedG>
Quat<typename DerivedQ::Scalar> quat_to_rotation_backward(const Eigen::MatrixBase<DerivedQ> &q,
                                                          const Eigen::MatrixBase<DerivedG> &dR) {
    using Scalar = typename DerivedQ::Scalar;
    const Scalar len = q.norm();
    const Quat<Scalar> n = q / len;
    const Scalar w = n[0], x = n[1], y = n[2], z = n[3];
    const auto &g = dR.derived();
    Quat<Scalar> dn;
    dn[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    dn[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                 w * g(2, 1) - 2 * x * g(2, 2));
    dn[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                 z * g(2, 1) - 2 * y * g(2, 2));
    dn[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                 x * g(2, 0) + y * g(2, 1));
    return (dn - n * n.dot(dn)) / len;
}

/// Unit quaternion for a rotation of `angle` radians about `axis` (normalized here).
template <typename Derived>
Quat<typename Derived::Scalar> quat_from_axis_angle(const Eigen::MatrixBase<Derived> &axis,
                                                    typename Derived::Scalar angle) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Matrix<Scalar, 3, 1> a = axis.normalized();
    const Scalar h = angle / 2;
    return Quat<Scalar>(std::cos(h), a[0] * std::sin(h), a[1] * std::sin(h), a[2] * std::sin(h));
}

/// Quaternion of a proper rotation matrix (Shepperd's method), w >= 0.
template <typename Derived>
Quat<typename Derived::Scalar> quat_from_rotation(const Eigen::MatrixBase<Derived> &m) {
    using Scalar = typename Derived::Scalar;
    Quat<Scalar> q;
    const Scalar trace = m(0, 0) + m(1, 1) + m(2, 2);
    if (trace > 0) {
        const Scalar s = std::sqrt(trace + 1) * 2;
        q << s / 4, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s;
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
        const Scalar s = std::sqrt(1 + m(0, 0) - m(1, 1) - m(2, 2)) * 2;
        q << (m(2, 1) - m(1, 2)) / s, s / 4, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s;
    } else if (m(1, 1) > m(2, 2)) {
        const Scalar s = std::sqrt(1 + m(1, 1) - m(0, 0) - m(2, 2)) * 2;
        q << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, s / 4, (m(1, 2) + m(2, 1)) / s;
    } else {
        const Scalar s = std::sqrt(1 + m(2, 2) - m(0, 0) - m(1, 1)) * 2;
        q << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, s / 4;
    }
    if (q[0] < 0)
        q = -q;
    return q.normalized();
}

} // namespace gaussadv
