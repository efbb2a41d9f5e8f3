// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/synthetic.hpp"

#include <Eigen/Geometry>

#include <array>
#include <limits>
#include <numbers>
#include <random>

namespace gaussadv {

namespace {

struct SurfaceSample {
    Eigen::Vector3d position;
    Eigen::Vector3d normal;
    Eigen::Vector3d color;
};

enum class Part { Body, Cabin, Wheel };

struct Face {
    Eigen::Vector3d center;
    Eigen::Vector3d u; // half-extent vectors spanning the face
    Eigen::Vector3d v;
    Eigen::Vector3d normal;
    Part part;
    double area() const { return 4.0 * u.norm() * v.norm(); }
};

void add_box_faces(std::vector<Face> &faces, const Eigen::Vector3d &c, const Eigen::Vector3d &h, Part part,
                   bool skip_bottom) {
    const Eigen::Vector3d ex = Eigen::Vector3d::UnitX() * h.x();
    const Eigen::Vector3d ey = Eigen::Vector3d::UnitY() * h.y();
    const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ() * h.z();
    faces.push_back({c + ex, ey, ez, Eigen::Vector3d::UnitX(), part});
    faces.push_back({c - ex, ey, ez, -Eigen::Vector3d::UnitX(), part});
    faces.push_back({c + ey, ex, ez, Eigen::Vector3d::UnitY(), part});
    faces.push_back({c - ey, ex, ez, -Eigen::Vector3d::UnitY(), part});
    faces.push_back({c + ez, ex, ey, Eigen::Vector3d::UnitZ(), part});
    if (!skip_bottom)
        faces.push_back({c - ez, ex, ey, -Eigen::Vector3d::UnitZ(), part});
}

Eigen::Vector3d jitter(const Eigen::Vector3d &base, std::mt19937_64 &rng, double amount) {
    std::normal_distribution<double> n(0.0, amount);
    Eigen::Vector3d c = base + Eigen::Vector3d(n(rng), n(rng), n(rng));
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<SurfaceSample> sample_box_car(int count, std::mt19937_64 &rng) {
    // Sedan-like proportions: lower body, set-back cabin, four wheel lobes.
    std::vector<Face> faces;
    add_box_faces(faces, {0.0, 0.0, 0.75}, {2.0, 0.9, 0.4}, Part::Body, false);
    add_box_faces(faces, {-0.25, 0.0, 1.45}, {1.1, 0.8, 0.3}, Part::Cabin, true);

    const double wheel_r = 0.36;
    const std::array<Eigen::Vector3d, 4> wheels = {
        Eigen::Vector3d(1.3, 0.95, wheel_r), Eigen::Vector3d(1.3, -0.95, wheel_r),
        Eigen::Vector3d(-1.3, 0.95, wheel_r), Eigen::Vector3d(-1.3, -0.95, wheel_r)};
    const double wheel_area = 4.0 * 4.0 * std::numbers::pi * wheel_r * wheel_r * 0.55;

    std::vector<double> weights;
    for (const auto &f : faces)
        weights.push_back(f.area());
    weights.push_back(wheel_area);
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const Eigen::Vector3d paint(0.78, 0.12, 0.10);
    const Eigen::Vector3d glass(0.18, 0.26, 0.40);
    const Eigen::Vector3d roof(0.70, 0.10, 0.09);
    const Eigen::Vector3d tyre(0.07, 0.07, 0.08);

    std::vector<SurfaceSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int k = pick(rng);
        SurfaceSample s;
        if (k == static_cast<int>(faces.size())) {
            const auto &w = wheels[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 3)(rng))];
            // Flattened sphere (disc-like lobe) facing ±y.
            Eigen::Vector3d d(gauss(rng), gauss(rng), gauss(rng));
            d.normalize();
            const Eigen::Vector3d p(d.x() * wheel_r, d.y() * wheel_r * 0.35, d.z() * wheel_r);
            s.position = w + p;
            s.normal = Eigen::Vector3d(p.x(), p.y() / 0.1225, p.z()).normalized();
            s.color = jitter(tyre, rng, 0.02);
        } else {
            const Face &f = faces[static_cast<std::size_t>(k)];
            const double a = sym(rng), b = sym(rng);
            s.position = f.center + a * f.u + b * f.v;
            s.normal = f.normal;
            if (f.part == Part::Cabin && std::abs(f.normal.z()) < 0.5)
                s.color = jitter(glass, rng, 0.03);
            else if (f.part == Part::Cabin)
                s.color = jitter(roof, rng, 0.03);
            else if (std::abs(f.normal.x()) > 0.5 && std::abs(b) < 0.35 && std::abs(a) > 0.6)
                s.color = jitter(Eigen::Vector3d(0.95, 0.92, 0.75), rng, 0.02); // lamps
            else
                s.color = jitter(paint, rng, 0.04);
        }
        out.push_back(s);
    }
    return out;
}

std::vector<SurfaceSample> sample_sphere(int count, std::mt19937_64 &rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<SurfaceSample> out;
    for (int i = 0; i < count; ++i) {
        Eigen::Vector3d d(gauss(rng), gauss(rng), gauss(rng));
        d.normalize();
        // Latitude bands give the sphere some texture.
        const Eigen::Vector3d base = std::sin(d.z() * 6.0) > 0 ? Eigen::Vector3d(0.2, 0.5, 0.85)
                                                               : Eigen::Vector3d(0.9, 0.85, 0.3);
        out.push_back({d, d, jitter(base, rng, 0.03)});
    }
    return out;
}

std::vector<SurfaceSample> sample_plane(int count, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::vector<SurfaceSample> out;
    for (int i = 0; i < count; ++i) {
        const Eigen::Vector3d p(sym(rng), sym(rng), 0.0);
        const Eigen::Vector3d base = static_cast<int>(std::floor(p.x() * 2.0) + std::floor(p.y() * 2.0)) % 2 == 0
                                         ? Eigen::Vector3d(0.85, 0.85, 0.85)
                                         : Eigen::Vector3d(0.15, 0.15, 0.2);
        out.push_back({p, Eigen::Vector3d::UnitZ(), jitter(base, rng, 0.02)});
    }
    return out;
}

/// Rotation taking local +z onto `normal` with a random twist about it.
Eigen::Vector4d frame_quaternion(const Eigen::Vector3d &normal, double twist) {
    Eigen::Vector3d helper = std::abs(normal.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    Eigen::Vector3d t1 = (helper - normal * normal.dot(helper)).normalized();
    Eigen::Vector3d t2 = normal.cross(t1);
    const Eigen::Vector3d a = std::cos(twist) * t1 + std::sin(twist) * t2;
    const Eigen::Vector3d b = normal.cross(a);
    Eigen::Matrix3d m;
    m.col(0) = a;
    m.col(1) = b;
    m.col(2) = normal;
    return quat_from_rotation(m);
}

} // namespace

GaussianCloud make_synthetic_cloud(const SyntheticSpec &spec) {
    if (spec.count < 1)
        throw Error(ErrorKind::InvalidParameter, "count must be >= 1");
    std::mt19937_64 rng(spec.seed);

    std::vector<SurfaceSample> samples;
    double surface_area = 0;
    if (spec.shape == "box-car") {
        samples = sample_box_car(spec.count, rng);
    } else if (spec.shape == "sphere") {
        samples = sample_sphere(spec.count, rng);
    } else if (spec.shape == "plane") {
        samples = sample_plane(spec.count, rng);
    } else {
        throw Error(ErrorKind::UnknownShape, "'" + spec.shape + "' (known: box-car, sphere, plane)");
    }

    if (spec.count == 1) {
        Gaussian g;
        g.position.setZero();
        g.rotation = quat_identity<double>();
        g.scale = Eigen::Vector3d::Constant(0.25);
        g.color = samples.front().color;
        g.opacity = 0.9;
        return GaussianCloud(std::vector<Gaussian>{g});
    }

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
    Eigen::Vector3d hi = -lo;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto &s : samples) {
        lo = lo.cwiseMin(s.position);
        hi = hi.cwiseMax(s.position);
        mean += s.position;
    }
    mean /= static_cast<double>(samples.size());
    const double extent = (hi - lo).norm();
    const double k = extent > 0 ? kSyntheticDiagonal / extent : 1.0;

    if (spec.shape == "box-car")
        surface_area = 2 * (4.0 * 1.8 + 4.0 * 0.8 + 1.8 * 0.8) + 2 * (2.2 * 0.6 + 1.6 * 0.6) + 2.2 * 1.6 + 4.0;
    else if (spec.shape == "sphere")
        surface_area = 4 * std::numbers::pi;
    else
        surface_area = 4.0;
    const double tangential = 0.55 * std::sqrt(surface_area * k * k / spec.count);
    const double normal_sigma = 0.2 * tangential;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Gaussian> out;
    out.reserve(samples.size());
    for (const auto &s : samples) {
        Gaussian g;
        g.position = (s.position - mean) * k;
        g.rotation = frame_quaternion(s.normal, 2.0 * std::numbers::pi * unit(rng));
        g.scale = Eigen::Vector3d(tangential * (0.8 + 0.4 * unit(rng)), tangential * (0.8 + 0.4 * unit(rng)),
                                  normal_sigma);
        g.color = s.color;
        g.opacity = 0.75 + 0.2 * unit(rng);
        out.push_back(g);
    }
    GaussianCloud cloud(out);
    // Re-center after scaling so the centroid is exactly at the origin up to rounding.
    const Eigen::Vector3d c = cloud.centroid();
    cloud.params().leftCols<3>().rowwise() -= c.transpose();
    return cloud;
}

std::vector<std::size_t> PlantedCloud::all_planted() const {
    std::vector<std::size_t> all = floaters;
    all.insert(all.end(), speckles.begin(), speckles.end());
    std::sort(all.begin(), all.end());
    return all;
}

PlantedCloud plant_artifacts(const GaussianCloud &clean, const ArtifactPlan &plan) {
    if (clean.empty())
        throw Error(ErrorKind::InvalidParameter, "cannot plant artifacts into an empty cloud");
    if (plan.floaters < 0 || plan.speckles < 0)
        throw Error(ErrorKind::InvalidParameter, "artifact counts must be non-negative");

    std::mt19937_64 rng(plan.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const Eigen::Vector3d center = clean.centroid();
    double radius = 0;
    for (Eigen::Index j = 0; j < clean.size(); ++j)
        radius = std::max(radius, (clean.position(j) - center).norm());
    const double typical_scale = clean.params().middleCols<3>(kScaleOffset).mean();

    GaussianCloud::Params params(clean.size() + plan.floaters + plan.speckles, kParamsPerGaussian);
    params.topRows(clean.size()) = clean.params();

    PlantedCloud out;
    Eigen::Index row = clean.size();
    for (int i = 0; i < plan.floaters; ++i, ++row) {
        Eigen::Vector3d d(gauss(rng), gauss(rng), std::abs(gauss(rng)));
        d.normalize();
        Gaussian g;
        g.position = center + d * radius * (1.4 + 1.2 * unit(rng));
        g.rotation = quat_from_axis_angle(Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)), 3.0 * unit(rng));
        g.scale = Eigen::Vector3d::Constant(typical_scale * (0.8 + 0.6 * unit(rng)));
        g.color = Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
        g.opacity = 0.6 + 0.35 * unit(rng);
        GaussianCloud tmp(std::vector<Gaussian>{g});
        params.row(row) = tmp.params().row(0);
        out.floaters.push_back(static_cast<std::size_t>(row));
    }
    std::uniform_int_distribution<Eigen::Index> host(0, clean.size() - 1);
    for (int i = 0; i < plan.speckles; ++i, ++row) {
        const Eigen::Index h = host(rng);
        Gaussian g;
        g.position = clean.position(h) + Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) * typical_scale * 0.5;
        g.rotation = quat_from_axis_angle(Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)), 3.0 * unit(rng));
        g.scale = Eigen::Vector3d(1e-5 + 3e-5 * unit(rng), 1e-5 + 3e-5 * unit(rng), 1e-5 + 3e-5 * unit(rng));
        g.color = unit(rng) < 0.5 ? Eigen::Vector3d(0.98, 0.98, 0.98) : Eigen::Vector3d(0.02, 0.02, 0.02);
        g.opacity = 0.9 + 0.1 * unit(rng);
        GaussianCloud tmp(std::vector<Gaussian>{g});
        params.row(row) = tmp.params().row(0);
        out.speckles.push_back(static_cast<std::size_t>(row));
    }
    out.cloud = GaussianCloud(std::move(params));
    return out;
}

} // namespace gaussadv
