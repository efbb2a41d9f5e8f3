// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <string>

namespace gaussadv {

namespace {

using Candidate = std::pair<double, std::size_t>; // (squared distance, index)

double squared(const Eigen::Vector3d &a, const Eigen::Vector3d &b) {
    const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

class KdTree {
public:
    explicit KdTree(const std::vector<Eigen::Vector3d> &pts) : mPts(pts), mOrder(pts.size()) {
        std::iota(mOrder.begin(), mOrder.end(), std::size_t{0});
        if (!pts.empty())
            build(0, pts.size());
    }

    void query(std::size_t self, int k, std::vector<std::size_t> &idx, std::vector<double> &d2) const {
        std::priority_queue<Candidate> heap; // max-heap: worst candidate on top
        search(0, self, static_cast<std::size_t>(k), heap);
        idx.resize(heap.size());
        d2.resize(heap.size());
        for (std::size_t i = heap.size(); i-- > 0;) {
            d2[i] = heap.top().first;
            idx[i] = heap.top().second;
            heap.pop();
        }
    }

private:
    static constexpr std::size_t kLeaf = 8;

    struct Node {
        std::size_t begin, end;
        int axis = -1; // -1: leaf
        double split = 0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = mNodes.size();
        mNodes.push_back({begin, end});
        if (end - begin <= kLeaf)
            return id;
        Eigen::Vector3d lo = mPts[mOrder[begin]], hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(mPts[mOrder[i]]);
            hi = hi.cwiseMax(mPts[mOrder[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(mOrder.begin() + static_cast<std::ptrdiff_t>(begin),
                         mOrder.begin() + static_cast<std::ptrdiff_t>(mid),
                         mOrder.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                             const double va = mPts[a][axis], vb = mPts[b][axis];
                             return va < vb || (va == vb && a < b);
                         });
        const double split = mPts[mOrder[mid]][axis];
        const std::size_t l = build(begin, mid);
        const std::size_t r = build(mid, end);
        Node &n = mNodes[id];
        n.axis = axis;
        n.split = split;
        n.left = l;
        n.right = r;
        return id;
    }

    static void offer(std::priority_queue<Candidate> &heap, std::size_t k, Candidate c) {
        if (heap.size() < k)
            heap.push(c);
        else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
        }
    }

    void search(std::size_t node, std::size_t self, std::size_t k, std::priority_queue<Candidate> &heap) const {
        const Node &n = mNodes[node];
        const Eigen::Vector3d &q = mPts[self];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const std::size_t j = mOrder[i];
                if (j != self)
                    offer(heap, k, {squared(q, mPts[j]), j});
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        const std::size_t near = diff < 0 ? n.left : n.right;
        const std::size_t far = diff < 0 ? n.right : n.left;
        search(near, self, k, heap);
        // Equal distances must still be visited so the index tie-break is exact.
        if (heap.size() < k || diff * diff <= heap.top().first)
            search(far, self, k, heap);
    }

    const std::vector<Eigen::Vector3d> &mPts;
    std::vector<std::size_t> mOrder;
    std::vector<Node> mNodes;
};

void check_k(std::size_t n, int k) {
    if (k < 1)
        throw Error(ErrorKind::InvalidParameter, "k must be at least 1");
    if (n <= static_cast<std::size_t>(k))
        throw Error(ErrorKind::TooFewGaussians,
                    "need more than k=" + std::to_string(k) + " Gaussians, have " + std::to_string(n));
}

} // namespace

void FilterConfig::validate() const {
    if (k < 1)
        throw Error(ErrorKind::InvalidParameter, "filter: k must be at least 1");
    if (!(p > 0 && p < 1))
        throw Error(ErrorKind::InvalidParameter, "filter: percentile p must lie in (0,1)");
    if (!(sigma_gain >= 0))
        throw Error(ErrorKind::InvalidParameter, "filter: sigma_gain must be non-negative");
    if (!(density_cap > 0))
        throw Error(ErrorKind::InvalidParameter, "filter: density_cap must be positive");
}

std::vector<Eigen::Vector3d> positions(const GaussianCloud &cloud) {
    std::vector<Eigen::Vector3d> pts(static_cast<std::size_t>(cloud.size()));
    for (Eigen::Index j = 0; j < cloud.size(); ++j)
        pts[static_cast<std::size_t>(j)] = cloud.position(j);
    return pts;
}

Neighbors knn(const std::vector<Eigen::Vector3d> &points, int k) {
    check_k(points.size(), k);
    const KdTree tree(points);
    Neighbors nb;
    nb.index.resize(points.size());
    nb.squared_distance.resize(points.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(points.size()); ++j)
        tree.query(static_cast<std::size_t>(j), k, nb.index[static_cast<std::size_t>(j)],
                   nb.squared_distance[static_cast<std::size_t>(j)]);
    return nb;
}

Neighbors knn_exhaustive(const std::vector<Eigen::Vector3d> &points, int k) {
    check_k(points.size(), k);
    Neighbors nb;
    nb.index.resize(points.size());
    nb.squared_distance.resize(points.size());
    std::vector<Candidate> all;
    for (std::size_t j = 0; j < points.size(); ++j) {
        all.clear();
        for (std::size_t i = 0; i < points.size(); ++i)
            if (i != j)
                all.emplace_back(squared(points[j], points[i]), i);
        std::partial_sort(all.begin(), all.begin() + k, all.end());
        for (int r = 0; r < k; ++r) {
            nb.index[j].push_back(all[static_cast<std::size_t>(r)].second);
            nb.squared_distance[j].push_back(all[static_cast<std::size_t>(r)].first);
        }
    }
    return nb;
}

std::vector<double> density_from_neighbors(const Neighbors &nb, int k, double cap) {
    std::vector<double> rho(nb.index.size());
    for (std::size_t j = 0; j < rho.size(); ++j) {
        const double r = std::sqrt(nb.squared_distance[j].back());
        const double volume = 4.0 / 3.0 * std::numbers::pi * r * r * r;
        rho[j] = volume > 0 ? std::min(cap, k / volume) : cap;
    }
    return rho;
}

std::vector<double> local_density(const GaussianCloud &cloud, int k, double cap) {
    return density_from_neighbors(knn(positions(cloud), k), k, cap);
}

std::vector<double> local_density_exhaustive(const GaussianCloud &cloud, int k, double cap) {
    return density_from_neighbors(knn_exhaustive(positions(cloud), k), k, cap);
}

PruneResult topological_prune(const GaussianCloud &cloud, const FilterConfig &config) {
    config.validate();
    PruneResult r;
    r.density = local_density(cloud, config.k, config.density_cap);
    const std::size_t n = r.density.size();

    std::vector<std::size_t> rank(n);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return r.density[a] < r.density[b] || (r.density[a] == r.density[b] && a < b);
    });

    std::size_t drop = static_cast<std::size_t>(std::floor(config.p * static_cast<double>(n)));
    const std::size_t floor = std::min(config.min_survivors, n);
    if (n - drop < floor) {
        drop = n - floor;
        r.floor_applied = true;
    }
    r.removed.assign(rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(drop));
    std::sort(r.removed.begin(), r.removed.end());
    r.threshold = drop < n ? r.density[rank[drop]] : 0.0;

    std::vector<char> keep(n, 1);
    for (auto j : r.removed)
        keep[j] = 0;
    for (std::size_t j = 0; j < n; ++j)
        if (keep[j])
            r.map.source.push_back(j);
    r.cloud = cloud.select(r.map.source);
    return r;
}

std::vector<double> denoise_sigma(const GaussianCloud &cloud, const ViewpointSet &views, double sigma_gain) {
    if (views.empty())
        throw Error(ErrorKind::InvalidParameter, "structural denoise needs at least one view");
    for (const auto &pose : views.poses)
        if (!(pose.focal > 0))
            throw Error(ErrorKind::InvalidParameter, "structural denoise needs positive focal lengths");
    std::vector<double> sigma(static_cast<std::size_t>(cloud.size()));
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < cloud.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        const Eigen::Vector3d x = cloud.position(j);
        for (const auto &pose : views.poses)
            best = std::min(best, pose.to_camera(x).norm() / pose.focal);
        sigma[static_cast<std::size_t>(j)] = sigma_gain * best;
    }
    return sigma;
}

GaussianCloud structural_denoise(const GaussianCloud &cloud, const ViewpointSet &views, const FilterConfig &config) {
    config.validate();
    const std::vector<double> sigma = denoise_sigma(cloud, views, config.sigma_gain);
    GaussianCloud out = cloud;
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < cloud.size(); ++j) {
        const double sg = sigma[static_cast<std::size_t>(j)];
        if (sg == 0.0)
            continue;
        const Eigen::Vector3d s = cloud.scale(j);
        const Eigen::Vector3d s2 = (s.array().square() + sg * sg).sqrt().matrix();
        out.scale(j) = s2;
        out.opacity(j) = std::clamp(cloud.opacity(j) * (s.prod() / s2.prod()), 0.0, 1.0);
    }
    return out;
}

FilterResult filter_cloud(const GaussianCloud &cloud, const ViewpointSet &views, const FilterConfig &config,
                          FilterStages stages) {
    config.validate();
    FilterResult r;
    if (stages.prune) {
        PruneResult pr = topological_prune(cloud, config);
        r.cloud = std::move(pr.cloud);
        r.map = std::move(pr.map);
        r.removed = std::move(pr.removed);
        r.threshold = pr.threshold;
        r.floor_applied = pr.floor_applied;
    } else {
        r.cloud = cloud;
        r.map = IndexMap::identity(static_cast<std::size_t>(cloud.size()));
    }
    if (stages.denoise)
        r.cloud = structural_denoise(r.cloud, views, config);
    return r;
}

double artifact_removal(const std::vector<std::size_t> &planted, const GaussianCloud &before,
                        const FilterResult &after, double suppress_ratio) {
    if (planted.empty())
        return 0.0;
    const std::vector<long> where = after.map.old_to_new(static_cast<std::size_t>(before.size()));
    std::size_t hit = 0;
    for (auto j : planted) {
        const long k = where.at(j);
        if (k < 0) {
            ++hit;
            continue;
        }
        const double a0 = before.opacity(static_cast<Eigen::Index>(j));
        if (after.cloud.opacity(k) <= suppress_ratio * a0)
            ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(planted.size());
}

} // namespace gaussadv
