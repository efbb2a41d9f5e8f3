// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/renderer.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <string>

namespace gaussadv {

namespace {

constexpr int kTile = 16;

struct Projected {
    bool visible = false;
    Eigen::Vector3d cam;
    Eigen::Vector2d mean;
    double qa = 0, qb = 0, qc = 0; // conic (inverse 2D covariance)
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
    double alpha = 0;
    Eigen::Vector3d color;
};

/// Everything forward and backward share: projections, depth order, tile bins.
struct Frame {
    std::vector<Projected> proj;
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::size_t> tile_begin; // offsets into `entries`, size tiles+1
    std::vector<int> entries;            // Gaussian indices, depth-sorted within each tile
    bool all_culled = true;
};

struct Covariance3d {
    Eigen::Matrix3d rot;
    Eigen::Matrix3d m; // rot * diag(scale)
    Eigen::Matrix3d sigma;
};

Covariance3d world_covariance(const GaussianCloud &cloud, Eigen::Index j) {
    Covariance3d c;
    c.rot = quat_to_rotation(Eigen::Vector4d(cloud.rotation(j)));
    c.m = c.rot * Eigen::Vector3d(cloud.scale(j)).asDiagonal();
    c.sigma = c.m * c.m.transpose();
    return c;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d &cam, double f) {
    const double iz = 1.0 / cam.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << f * iz, 0, -f * cam.x() * iz * iz,
           0, f * iz, -f * cam.y() * iz * iz;
    return jac;
}

Frame prepare(const GaussianCloud &cloud, const CameraPose &pose, const RenderOptions &opt) {
    Frame fr;
    const auto n = static_cast<std::size_t>(cloud.size());
    fr.proj.resize(n);
    const double cutoff = opt.cutoff_sigma;
    // Exceptions cannot leave the parallel region; report the first degenerate row afterwards.
    auto degenerate = static_cast<std::ptrdiff_t>(n);

#pragma omp parallel for schedule(static) reduction(min : degenerate)
    for (std::ptrdiff_t sj = 0; sj < static_cast<std::ptrdiff_t>(n); ++sj) {
        const auto j = static_cast<Eigen::Index>(sj);
        Projected &p = fr.proj[static_cast<std::size_t>(sj)];
        p.cam = pose.to_camera(Eigen::Vector3d(cloud.position(j)));
        if (!(p.cam.z() > opt.near_plane))
            continue;
        const Covariance3d c3 = world_covariance(cloud, j);
        const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(p.cam, pose.focal);
        const Eigen::Matrix<double, 2, 3> jw = jac * pose.rotation;
        Eigen::Matrix2d cov = jw * c3.sigma * jw.transpose();
        cov(0, 0) += opt.dilation;
        cov(1, 1) += opt.dilation;
        const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
        if (!(det >= 1e-12) || !std::isfinite(det)) {
            degenerate = std::min(degenerate, sj);
            continue;
        }
        p.qa = cov(1, 1) / det;
        p.qb = -0.5 * (cov(0, 1) + cov(1, 0)) / det;
        p.qc = cov(0, 0) / det;
        p.mean = Eigen::Vector2d(pose.focal * p.cam.x() / p.cam.z() + pose.principal.x(),
                                 pose.focal * p.cam.y() / p.cam.z() + pose.principal.y());
        const double rx = cutoff * std::sqrt(cov(0, 0));
        const double ry = cutoff * std::sqrt(cov(1, 1));
        const double fx0 = std::ceil(p.mean.x() - rx - 0.5), fx1 = std::floor(p.mean.x() + rx - 0.5);
        const double fy0 = std::ceil(p.mean.y() - ry - 0.5), fy1 = std::floor(p.mean.y() + ry - 0.5);
        if (fx1 < 0 || fy1 < 0 || fx0 > pose.width - 1 || fy0 > pose.height - 1)
            continue;
        p.x0 = static_cast<int>(std::max(0.0, fx0));
        p.x1 = static_cast<int>(std::min<double>(pose.width - 1, fx1));
        p.y0 = static_cast<int>(std::max(0.0, fy0));
        p.y1 = static_cast<int>(std::min<double>(pose.height - 1, fy1));
        if (p.x0 > p.x1 || p.y0 > p.y1)
            continue;
        p.alpha = cloud.opacity(j);
        p.color = cloud.color(j);
        p.visible = true;
    }
    if (degenerate < static_cast<std::ptrdiff_t>(n)) {
        const auto j = static_cast<Eigen::Index>(degenerate);
        const Covariance3d c3 = world_covariance(cloud, j);
        const Eigen::Matrix<double, 2, 3> jw =
            projection_jacobian(fr.proj[static_cast<std::size_t>(degenerate)].cam, pose.focal) * pose.rotation;
        Eigen::Matrix2d cov = jw * c3.sigma * jw.transpose();
        cov.diagonal().array() += opt.dilation;
        throw Error(ErrorKind::DegenerateCovariance, "gaussian " + std::to_string(j) +
                                                         " has 2D covariance determinant " +
                                                         std::to_string(cov.determinant()));
    }

    std::vector<int> order;
    order.reserve(n);
    for (std::size_t j = 0; j < n; ++j)
        if (fr.proj[j].visible)
            order.push_back(static_cast<int>(j));
    fr.all_culled = order.empty();
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fr.proj[static_cast<std::size_t>(a)].cam.z() <
                                                fr.proj[static_cast<std::size_t>(b)].cam.z(); });

    fr.tiles_x = (pose.width + kTile - 1) / kTile;
    fr.tiles_y = (pose.height + kTile - 1) / kTile;
    const auto tiles = static_cast<std::size_t>(fr.tiles_x * fr.tiles_y);
    std::vector<std::size_t> counts(tiles, 0);
    for (int j : order) {
        const Projected &p = fr.proj[static_cast<std::size_t>(j)];
        for (int ty = p.y0 / kTile; ty <= p.y1 / kTile; ++ty)
            for (int tx = p.x0 / kTile; tx <= p.x1 / kTile; ++tx)
                ++counts[static_cast<std::size_t>(ty * fr.tiles_x + tx)];
    }
    fr.tile_begin.assign(tiles + 1, 0);
    std::partial_sum(counts.begin(), counts.end(), fr.tile_begin.begin() + 1);
    fr.entries.resize(fr.tile_begin.back());
    std::vector<std::size_t> cursor(fr.tile_begin.begin(), fr.tile_begin.end() - 1);
    for (int j : order) {
        const Projected &p = fr.proj[static_cast<std::size_t>(j)];
        for (int ty = p.y0 / kTile; ty <= p.y1 / kTile; ++ty)
            for (int tx = p.x0 / kTile; tx <= p.x1 / kTile; ++tx)
                fr.entries[cursor[static_cast<std::size_t>(ty * fr.tiles_x + tx)]++] = j;
    }
    return fr;
}

/// e^{-m/2} minus its tangent line at the cutoff, normalized to 1 at m = 0:
/// value and slope both reach zero at the cutoff, so the footprint is C¹.
struct Profile {
    double cutoff_sq;
    double floor;    ///< e^{-c²/2}
    double inv_norm;

    explicit Profile(double cutoff)
        : cutoff_sq(cutoff * cutoff), floor(std::exp(-0.5 * cutoff * cutoff)),
          inv_norm(1.0 / (1.0 - floor * (1.0 + 0.5 * cutoff * cutoff))) {}

    double value(double m) const { return (std::exp(-0.5 * m) - floor * (1.0 + 0.5 * (cutoff_sq - m))) * inv_norm; }
    double slope(double m) const { return -0.5 * (std::exp(-0.5 * m) - floor) * inv_norm; }
};

RenderedView allocate_view(const CameraPose &pose, const RenderOptions &opt) {
    RenderedView view;
    view.rgb = RgbImage(pose.height, pose.width);
    for (int c = 0; c < 3; ++c)
        view.rgb[c].setConstant(opt.background[c]);
    view.alpha = Plane::Zero(pose.height, pose.width);
    view.depth = Plane::Constant(pose.height, pose.width, opt.far_depth);
    return view;
}

void validate_pose(const CameraPose &pose) {
    if (pose.width < 1 || pose.height < 1 || !(pose.focal > 0))
        throw Error(ErrorKind::InvalidParameter, "camera needs positive resolution and focal length");
}

struct Contribution {
    int gaussian;
    std::size_t entry;
    double w;
    double transmittance; // before this Gaussian
    double m;
    double dx, dy;
};

} // namespace

double footprint_profile(double mahalanobis_sq, double cutoff_sigma) {
    const Profile prof(cutoff_sigma);
    if (!(mahalanobis_sq < prof.cutoff_sq))
        return 0.0;
    return prof.value(mahalanobis_sq);
}

RenderedView render(const GaussianCloud &cloud, const CameraPose &pose, const RenderOptions &opt) {
    validate_pose(pose);
    const Frame fr = prepare(cloud, pose, opt);
    RenderedView view = allocate_view(pose, opt);
    view.all_culled = fr.all_culled;
    if (fr.all_culled)
        return view;

    const Profile prof(opt.cutoff_sigma);
    const int tiles = fr.tiles_x * fr.tiles_y;

#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < tiles; ++t) {
        const std::size_t b = fr.tile_begin[static_cast<std::size_t>(t)];
        const std::size_t e = fr.tile_begin[static_cast<std::size_t>(t) + 1];
        if (b == e)
            continue;
        const int tx = t % fr.tiles_x, ty = t / fr.tiles_x;
        for (int py = ty * kTile; py < std::min(pose.height, (ty + 1) * kTile); ++py) {
            for (int px = tx * kTile; px < std::min(pose.width, (tx + 1) * kTile); ++px) {
                const double cx = px + 0.5, cy = py + 0.5;
                double T = 1.0;
                Eigen::Vector3d col = Eigen::Vector3d::Zero();
                double znum = 0.0;
                for (std::size_t k = b; k < e; ++k) {
                    const Projected &p = fr.proj[static_cast<std::size_t>(fr.entries[k])];
                    if (px < p.x0 || px > p.x1 || py < p.y0 || py > p.y1)
                        continue;
                    const double dx = cx - p.mean.x(), dy = cy - p.mean.y();
                    const double m = p.qa * dx * dx + 2.0 * p.qb * dx * dy + p.qc * dy * dy;
                    if (!(m < prof.cutoff_sq))
                        continue;
                    const double w = p.alpha * prof.value(m);
                    if (w <= 0.0)
                        continue;
                    col += (T * w) * p.color;
                    znum += T * w * p.cam.z();
                    T *= 1.0 - w;
                    if (T < opt.min_transmittance)
                        break;
                }
                const double a = 1.0 - T;
                for (int c = 0; c < 3; ++c)
                    view.rgb[c](py, px) = col[c] + T * opt.background[c];
                view.alpha(py, px) = a;
                view.depth(py, px) = (znum + opt.depth_epsilon * opt.far_depth) / (a + opt.depth_epsilon);
            }
        }
    }
    return view;
}

ParamGradients render_with_grad(const GaussianCloud &cloud, const CameraPose &pose, const RgbImage &upstream,
                                const RenderOptions &opt) {
    ViewCotangent cot;
    cot.rgb = &upstream;
    return render_with_grad(cloud, pose, cot, opt);
}

ParamGradients render_with_grad(const GaussianCloud &cloud, const CameraPose &pose, const ViewCotangent &up,
                                const RenderOptions &opt) {
    validate_pose(pose);
    auto check = [&](int h, int w, const char *what) {
        if (h != pose.height || w != pose.width)
            throw Error(ErrorKind::ShapeMismatch, std::string(what) + " cotangent resolution differs from camera");
    };
    if (up.rgb) {
        check(up.rgb->height(), up.rgb->width(), "rgb");
        if (!up.rgb->allFinite())
            throw Error(ErrorKind::NonFiniteValue, "rgb cotangent");
    }
    if (up.alpha) {
        check(static_cast<int>(up.alpha->rows()), static_cast<int>(up.alpha->cols()), "alpha");
        if (!up.alpha->allFinite())
            throw Error(ErrorKind::NonFiniteValue, "alpha cotangent");
    }
    if (up.depth) {
        check(static_cast<int>(up.depth->rows()), static_cast<int>(up.depth->cols()), "depth");
        if (!up.depth->allFinite())
            throw Error(ErrorKind::NonFiniteValue, "depth cotangent");
    }

    ParamGradients grad = ParamGradients::Zero(cloud.size(), kParamsPerGaussian);
    const Frame fr = prepare(cloud, pose, opt);
    if (fr.all_culled || (!up.rgb && !up.alpha && !up.depth))
        return grad;

    const Profile prof(opt.cutoff_sigma);
    const int tiles = fr.tiles_x * fr.tiles_y;
    constexpr int kSlots = 10; // mean(2) conic(3) alpha color(3) depth
    std::vector<std::array<double, kSlots>> entry_grad(fr.entries.size());
    for (auto &g : entry_grad)
        g.fill(0.0);

#pragma omp parallel
    {
        std::vector<Contribution> list;
#pragma omp for schedule(dynamic)
        for (int t = 0; t < tiles; ++t) {
            const std::size_t b = fr.tile_begin[static_cast<std::size_t>(t)];
            const std::size_t e = fr.tile_begin[static_cast<std::size_t>(t) + 1];
            if (b == e)
                continue;
            const int tx = t % fr.tiles_x, ty = t / fr.tiles_x;
            for (int py = ty * kTile; py < std::min(pose.height, (ty + 1) * kTile); ++py) {
                for (int px = tx * kTile; px < std::min(pose.width, (tx + 1) * kTile); ++px) {
                    const double cx = px + 0.5, cy = py + 0.5;
                    list.clear();
                    double T = 1.0;
                    double znum = 0.0;
                    for (std::size_t k = b; k < e; ++k) {
                        const int j = fr.entries[k];
                        const Projected &p = fr.proj[static_cast<std::size_t>(j)];
                        if (px < p.x0 || px > p.x1 || py < p.y0 || py > p.y1)
                            continue;
                        const double dx = cx - p.mean.x(), dy = cy - p.mean.y();
                        const double m = p.qa * dx * dx + 2.0 * p.qb * dx * dy + p.qc * dy * dy;
                        if (!(m < prof.cutoff_sq))
                            continue;
                        const double w = p.alpha * prof.value(m);
                        if (w <= 0.0)
                            continue;
                        list.push_back({j, k, w, T, m, dx, dy});
                        znum += T * w * p.cam.z();
                        T *= 1.0 - w;
                        if (T < opt.min_transmittance)
                            break;
                    }
                    if (list.empty())
                        continue;

                    Eigen::Vector3d g_rgb = Eigen::Vector3d::Zero();
                    if (up.rgb)
                        for (int c = 0; c < 3; ++c)
                            g_rgb[c] = (*up.rgb)[c](py, px);
                    const double a = 1.0 - T;
                    const double denom = a + opt.depth_epsilon;
                    const double depth = (znum + opt.depth_epsilon * opt.far_depth) / denom;
                    const double g_depth = up.depth ? (*up.depth)(py, px) : 0.0;
                    const double g_znum = g_depth / denom;
                    const double g_a = (up.alpha ? (*up.alpha)(py, px) : 0.0) - g_depth * depth / denom;

                    Eigen::Vector3d after = opt.background; // color composited behind entry k
                    double after_z = 0.0;
                    double suffix = 1.0; // Π (1 - w_i) over entries behind k
                    for (auto it = list.rbegin(); it != list.rend(); ++it) {
                        const Projected &p = fr.proj[static_cast<std::size_t>(it->gaussian)];
                        const double wt = it->w * it->transmittance;
                        auto &acc = entry_grad[it->entry];
                        for (int c = 0; c < 3; ++c)
                            acc[6 + c] += g_rgb[c] * wt;
                        acc[9] += g_znum * wt;

                        const double g_w = it->transmittance * (g_rgb.dot(p.color - after) +
                                                                g_znum * (p.cam.z() - after_z) + g_a * suffix);
                        after = p.color * it->w + (1.0 - it->w) * after;
                        after_z = p.cam.z() * it->w + (1.0 - it->w) * after_z;
                        suffix *= 1.0 - it->w;

                        const double phi = prof.value(it->m);
                        acc[5] += g_w * phi;
                        const double g_m = g_w * p.alpha * prof.slope(it->m);
                        acc[0] += g_m * (-2.0 * (p.qa * it->dx + p.qb * it->dy));
                        acc[1] += g_m * (-2.0 * (p.qb * it->dx + p.qc * it->dy));
                        acc[2] += g_m * it->dx * it->dx;
                        acc[3] += g_m * it->dx * it->dy;
                        acc[4] += g_m * it->dy * it->dy;
                    }
                }
            }
        }
    }

    // Fixed-order reduction over tiles keeps the result independent of scheduling.
    std::vector<std::array<double, kSlots>> gauss_grad(static_cast<std::size_t>(cloud.size()));
    for (auto &g : gauss_grad)
        g.fill(0.0);
    for (std::size_t k = 0; k < fr.entries.size(); ++k) {
        auto &dst = gauss_grad[static_cast<std::size_t>(fr.entries[k])];
        for (int s = 0; s < kSlots; ++s)
            dst[static_cast<std::size_t>(s)] += entry_grad[k][static_cast<std::size_t>(s)];
    }

    const double f = pose.focal;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t sj = 0; sj < static_cast<std::ptrdiff_t>(cloud.size()); ++sj) {
        const auto j = static_cast<Eigen::Index>(sj);
        const Projected &p = fr.proj[static_cast<std::size_t>(sj)];
        if (!p.visible)
            continue;
        const auto &g = gauss_grad[static_cast<std::size_t>(sj)];

        grad(j, kAlpha) = g[5];
        grad(j, kCr) = g[6];
        grad(j, kCg) = g[7];
        grad(j, kCb) = g[8];

        const Covariance3d c3 = world_covariance(cloud, j);
        const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(p.cam, f);
        const Eigen::Matrix3d cam_cov = pose.rotation * c3.sigma * pose.rotation.transpose();

        Eigen::Matrix2d conic;
        conic << p.qa, p.qb, p.qb, p.qc;
        Eigen::Matrix2d g_conic;
        g_conic << g[2], g[3], g[3], g[4];
        const Eigen::Matrix2d g_cov2 = -conic * g_conic * conic;

        const Eigen::Matrix3d g_cam_cov = jac.transpose() * g_cov2 * jac;
        const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2 * jac * cam_cov;
        const Eigen::Matrix3d g_sigma = pose.rotation.transpose() * g_cam_cov * pose.rotation;
        const Eigen::Matrix3d g_m = 2.0 * g_sigma * c3.m;
        const Eigen::Vector3d s = cloud.scale(j);
        const Eigen::Matrix3d g_rot = g_m * s.asDiagonal();
        for (int i = 0; i < 3; ++i)
            grad(j, kSx + i) = g_m.col(i).dot(c3.rot.col(i));
        grad.row(j).segment<4>(kRotationOffset) =
            quat_to_rotation_backward(Eigen::Vector4d(cloud.rotation(j)), g_rot).transpose();

        const double x = p.cam.x(), y = p.cam.y(), iz = 1.0 / p.cam.z();
        const double iz2 = iz * iz, iz3 = iz2 * iz;
        Eigen::Vector3d g_cam;
        g_cam.x() = g[0] * f * iz - g_jac(0, 2) * f * iz2;
        g_cam.y() = g[1] * f * iz - g_jac(1, 2) * f * iz2;
        g_cam.z() = -g[0] * f * x * iz2 - g[1] * f * y * iz2 - (g_jac(0, 0) + g_jac(1, 1)) * f * iz2 +
                    2.0 * f * (g_jac(0, 2) * x + g_jac(1, 2) * y) * iz3 + g[9];
        grad.row(j).segment<3>(kPositionOffset) = (pose.rotation.transpose() * g_cam).transpose();
    }
    return grad;
}

std::vector<RenderedView> render_batch(const GaussianCloud &cloud, const ViewpointSet &views,
                                       const RenderOptions &options) {
    std::vector<RenderedView> out;
    out.reserve(views.size());
    for (const auto &pose : views.poses)
        out.push_back(render(cloud, pose, options));
    return out;
}

} // namespace gaussadv
