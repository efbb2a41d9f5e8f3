// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/attack.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace gaussadv {

namespace {

constexpr std::array<const char *, kParamsPerGaussian> kSlotNames = {
    "px", "py", "pz", "qw", "qx", "qy", "qz", "sx", "sy", "sz", "cr", "cg", "cb", "a"};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_pairing(const GaussianCloud &cloud, const GaussianCloud &initial, const IndexMap &map) {
    if (map.source.size() != static_cast<std::size_t>(cloud.size()))
        throw Error(ErrorKind::UnpairedGaussian, "index map has " + std::to_string(map.source.size()) +
                                                     " entries for " + std::to_string(cloud.size()) + " Gaussians");
    for (std::size_t j = 0; j < map.source.size(); ++j)
        if (map.source[j] >= static_cast<std::size_t>(initial.size()))
            throw Error(ErrorKind::UnpairedGaussian, "gaussian " + std::to_string(j) + " maps past the initial cloud");
}

double shape_loss_impl(const GaussianCloud &cloud, const GaussianCloud &initial, const IndexMap &map,
                       ParamGradients *grad) {
    check_pairing(cloud, initial, map);
    const Eigen::Index n = cloud.size();
    if (grad)
        *grad = ParamGradients::Zero(n, kParamsPerGaussian);
    if (n == 0)
        return 0.0;
    const Eigen::Vector4d id = quat_identity<double>();
    const double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto i = static_cast<Eigen::Index>(map.source[static_cast<std::size_t>(j)]);
        const Eigen::Vector3d dp = cloud.position(j) - initial.position(i);
        const Eigen::Vector3d ds = cloud.scale(j) - initial.scale(i);
        const Eigen::Matrix4d right = quat_right_matrix(quat_inverse(Eigen::Vector4d(initial.rotation(i))));
        // Identical rotations give an exactly zero residual, free of round-off.
        const Eigen::Vector4d dq = cloud.rotation(j) == initial.rotation(i)
                                       ? Eigen::Vector4d::Zero()
                                       : Eigen::Vector4d(right * Eigen::Vector4d(cloud.rotation(j)) - id);
        acc += dp.squaredNorm() + ds.squaredNorm() + dq.squaredNorm();
        if (grad) {
            grad->row(j).segment<3>(kPositionOffset) = (2.0 * inv_n) * dp.transpose();
            grad->row(j).segment<3>(kScaleOffset) = (2.0 * inv_n) * ds.transpose();
            grad->row(j).segment<4>(kRotationOffset) = (2.0 * inv_n) * (right.transpose() * dq).transpose();
        }
    }
    return acc * inv_n;
}

struct ViewResult {
    double confidence = 0;
    ParamGradients grad;
};

ViewResult score_view(const GaussianCloud &cloud, const CameraPose &pose, std::size_t view_index,
                      const DifferentiableDetector &detector, const AugmentConfig *augment, std::uint64_t epoch,
                      bool with_grad, const RenderOptions &options) {
    ViewResult out;
    const RenderedView rendered = render(cloud, pose, options);
    std::optional<Augmented> aug;
    if (augment)
        aug = apply_all(rendered, *augment, epoch, view_index);
    const RgbImage &input = aug ? aug->view.rgb : rendered.rgb;
    RgbImage g_img;
    try {
        out.confidence = with_grad ? detector.confidence_with_grad(input, g_img) : detector.confidence(input);
    } catch (const Error &) {
        throw;
    } catch (const std::exception &e) {
        throw Error(ErrorKind::DetectorFailure, e.what());
    }
    if (!std::isfinite(out.confidence) || (with_grad && !g_img.allFinite()))
        throw Error(ErrorKind::DetectorFailure, "non-finite detector output on view " + std::to_string(view_index));
    if (!with_grad)
        return out;
    ViewCotangent cot;
    AugmentGrad ag;
    if (aug) {
        ag = augment_backward(aug->trace, *augment, g_img);
        cot.rgb = &ag.rgb;
        cot.depth = &ag.depth;
    } else {
        cot.rgb = &g_img;
    }
    out.grad = render_with_grad(cloud, pose, cot, options);
    return out;
}

} // namespace

const std::array<const char *, kParamsPerGaussian> &slot_names() { return kSlotNames; }

DimensionMask DimensionMask::geometry() {
    DimensionMask m;
    for (int s = kPx; s <= kSz; ++s)
        m.selected[static_cast<std::size_t>(s)] = true;
    return m;
}

DimensionMask DimensionMask::appearance() {
    DimensionMask m;
    for (int s = kCr; s <= kAlpha; ++s)
        m.selected[static_cast<std::size_t>(s)] = true;
    return m;
}

DimensionMask DimensionMask::full() {
    DimensionMask m;
    m.selected.fill(true);
    return m;
}

DimensionMask DimensionMask::parse(const std::string &text) {
    if (text == "full" || text == "FULL")
        return full();
    if (text == "geometry" || text == "GEOMETRY")
        return geometry();
    if (text == "appearance" || text == "APPEARANCE")
        return appearance();
    DimensionMask m;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
        item = b == std::string::npos ? "" : item.substr(b, e - b + 1);
        bool found = false;
        for (int s = 0; s < kParamsPerGaussian; ++s)
            if (item == kSlotNames[static_cast<std::size_t>(s)]) {
                m.selected[static_cast<std::size_t>(s)] = true;
                found = true;
            }
        if (!found)
            throw Error(ErrorKind::InvalidParameter, "unknown parameter slot '" + item + "'");
    }
    m.validate();
    return m;
}

std::string DimensionMask::to_string() const {
    if (*this == full())
        return "full";
    if (*this == geometry())
        return "geometry";
    if (*this == appearance())
        return "appearance";
    std::string out;
    for (int s = 0; s < kParamsPerGaussian; ++s)
        if (contains(s))
            out += (out.empty() ? "" : ",") + std::string(kSlotNames[static_cast<std::size_t>(s)]);
    return out;
}

int DimensionMask::count() const {
    int n = 0;
    for (bool b : selected)
        n += b ? 1 : 0;
    return n;
}

void DimensionMask::validate() const {
    if (count() == 0)
        throw Error(ErrorKind::InvalidParameter, "dimension mask selects no slots");
}

WeightState dynamic_weights(double mean_adv, double mean_shape, const WeightState &state) {
    if (!(mean_adv >= 0) || !(mean_shape >= 0))
        throw Error(ErrorKind::InvalidParameter, "dynamic weights need non-negative mean losses");
    WeightState out = state;
    const double scaled = mean_adv / state.gamma_scale;
    const double w_adv = 1.0 / (scaled + state.epsilon);
    const double w_shape = mean_shape;
    const double sum = w_adv + w_shape + state.epsilon;
    double lambda_shape = std::isfinite(sum) ? w_shape / sum : 0.0;
    lambda_shape = std::max(lambda_shape, state.lambda_min);
    out.lambda_shape = lambda_shape;
    out.lambda_adv = 1.0 - lambda_shape;
    return out;
}

double shape_loss(const GaussianCloud &cloud, const GaussianCloud &initial, const IndexMap &map) {
    return shape_loss_impl(cloud, initial, map, nullptr);
}

double shape_loss(const GaussianCloud &cloud, const GaussianCloud &initial, const IndexMap &map,
                  ParamGradients &grad) {
    return shape_loss_impl(cloud, initial, map, &grad);
}

AdvLoss adv_loss(const GaussianCloud &cloud, const ViewpointSet &views, const DifferentiableDetector &detector,
                 const AugmentConfig *augment, std::uint64_t epoch, bool with_grad, const RenderOptions &options) {
    if (views.empty())
        throw Error(ErrorKind::InvalidParameter, "adversarial loss needs at least one view");
    const auto nv = static_cast<std::ptrdiff_t>(views.size());
    std::vector<ViewResult> per(views.size());
    std::vector<std::exception_ptr> failures(views.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t v = 0; v < nv; ++v) {
        try {
            per[static_cast<std::size_t>(v)] = score_view(cloud, views.poses[static_cast<std::size_t>(v)],
                                                          static_cast<std::size_t>(v), detector, augment, epoch,
                                                          with_grad, options);
        } catch (...) {
            failures[static_cast<std::size_t>(v)] = std::current_exception();
        }
    }
    for (const auto &f : failures)
        if (f)
            std::rethrow_exception(f);

    AdvLoss out;
    double acc = 0.0;
    for (const auto &r : per) {
        out.confidences.push_back(r.confidence);
        acc += r.confidence;
    }
    const double inv = 1.0 / static_cast<double>(views.size());
    out.value = acc * inv;
    if (with_grad) {
        out.grad = ParamGradients::Zero(cloud.size(), kParamsPerGaussian);
        // Fixed view order keeps the reduction deterministic.
        for (const auto &r : per)
            out.grad += r.grad;
        out.grad *= inv;
    }
    return out;
}

Optimizer parse_optimizer(const std::string &name) {
    if (name == "gd" || name == "sgd")
        return Optimizer::GradientDescent;
    if (name == "adam")
        return Optimizer::Adam;
    throw Error(ErrorKind::InvalidParameter, "unknown optimizer '" + name + "' (gd, adam)");
}

std::string to_string(Optimizer optimizer) { return optimizer == Optimizer::Adam ? "adam" : "gd"; }

void AttackConfig::validate() const {
    if (epochs < 1)
        throw Error(ErrorKind::InvalidParameter, "attack needs at least one epoch");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate))
        throw Error(ErrorKind::InvalidParameter, "learning rate must be a finite non-negative number");
    if (views.empty())
        throw Error(ErrorKind::InvalidParameter, "attack needs at least one view");
    mask.validate();
    if (augment_enabled)
        augment.validate();
    if (!(weights.lambda_min >= 0 && weights.lambda_min <= 1) || !(weights.gamma_scale > 0) ||
        !(weights.epsilon > 0))
        throw Error(ErrorKind::InvalidParameter, "weight constants out of range");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1) || !(adam_epsilon > 0))
        throw Error(ErrorKind::InvalidParameter, "adam constants out of range");
    if (fixed_lambda_shape && !(*fixed_lambda_shape >= 0 && *fixed_lambda_shape <= 1))
        throw Error(ErrorKind::InvalidParameter, "fixed lambda_shape must lie in [0,1]");
}

void project_masked(GaussianCloud &cloud, const DimensionMask &mask) {
    auto &p = cloud.params();
    bool any_rot = false;
    for (int s = kQw; s <= kQz; ++s)
        any_rot = any_rot || mask.contains(s);
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
        if (any_rot) {
            double fixed = 0.0, free = 0.0;
            for (int s = kQw; s <= kQz; ++s)
                (mask.contains(s) ? free : fixed) += p(j, s) * p(j, s);
            // Scale the free components so the quaternion is unit again. Already
            // unit rows are left bit-identical; the renderer normalizes anyway,
            // so an unreachable target is left alone too.
            if (free > 0 && fixed < 1.0 && std::abs(fixed + free - 1.0) > 1e-12) {
                const double k = std::sqrt((1.0 - fixed) / free);
                if (k != 1.0)
                    for (int s = kQw; s <= kQz; ++s)
                        if (mask.contains(s))
                            p(j, s) *= k;
            }
        }
        for (int s = kSx; s <= kSz; ++s)
            if (mask.contains(s))
                p(j, s) = std::max(p(j, s), kMinScale);
        for (int s = kCr; s <= kAlpha; ++s)
            if (mask.contains(s))
                p(j, s) = std::clamp(p(j, s), 0.0, 1.0);
    }
}

AttackResult run_attack(const GaussianCloud &cloud, const AttackConfig &config,
                        const DifferentiableDetector &detector) {
    return run_attack(cloud, config, detector, cloud, IndexMap::identity(static_cast<std::size_t>(cloud.size())));
}

AttackResult run_attack(const GaussianCloud &cloud, const AttackConfig &config,
                        const DifferentiableDetector &detector, const GaussianCloud &reference, const IndexMap &map) {
    config.validate();
    check_pairing(cloud, reference, map);
    AttackConfig cfg = config;
    cfg.augment.seed = config.augment.seed ^ config.seed;
    const AugmentConfig *augment = config.augment_enabled ? &cfg.augment : nullptr;

    AttackResult result;
    result.cloud = cloud;
    AttackReport &report = result.report;
    report.initial_confidence =
        adv_loss(cloud, config.views, detector, nullptr, 0, false, config.render).confidences;

    Eigen::Matrix<double, 1, kParamsPerGaussian> mask_row;
    for (int s = 0; s < kParamsPerGaussian; ++s)
        mask_row[s] = config.mask.contains(s) ? 1.0 : 0.0;

    WeightState weights = config.weights;
    ParamGradients moment1, moment2;
    if (config.optimizer == Optimizer::Adam) {
        moment1 = ParamGradients::Zero(cloud.size(), kParamsPerGaussian);
        moment2 = ParamGradients::Zero(cloud.size(), kParamsPerGaussian);
    }
    double beta1_pow = 1.0, beta2_pow = 1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        AdvLoss adv = adv_loss(result.cloud, config.views, detector, augment, static_cast<std::uint64_t>(epoch), true,
                               config.render);
        ParamGradients g_shape;
        const double shape = shape_loss(result.cloud, reference, map, g_shape);
        if (!std::isfinite(adv.value) || !std::isfinite(shape))
            throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch));
        if (config.fixed_lambda_shape) {
            weights.lambda_shape = *config.fixed_lambda_shape;
            weights.lambda_adv = 1.0 - weights.lambda_shape;
        } else {
            weights = dynamic_weights(adv.value, shape, weights);
        }

        ParamGradients step = weights.lambda_adv * adv.grad + weights.lambda_shape * g_shape;
        if (!step.allFinite())
            throw Error(ErrorKind::NonFiniteLoss, "non-finite gradient at epoch " + std::to_string(epoch));
        if (config.optimizer == Optimizer::Adam) {
            const double b1 = config.adam_beta1, b2 = config.adam_beta2;
            beta1_pow *= b1;
            beta2_pow *= b2;
            moment1 = b1 * moment1 + (1.0 - b1) * step;
            moment2 = b2 * moment2 + (1.0 - b2) * step.cwiseAbs2();
            step = ((moment1 / (1.0 - beta1_pow)).array() /
                    ((moment2 / (1.0 - beta2_pow)).array().sqrt() + config.adam_epsilon))
                       .matrix();
        }
        auto &p = result.cloud.params();
        for (Eigen::Index j = 0; j < p.rows(); ++j)
            for (int s = 0; s < kParamsPerGaussian; ++s)
                if (mask_row[s] != 0.0)
                    p(j, s) -= config.learning_rate * step(j, s);
        project_masked(result.cloud, config.mask);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.adv = adv.value;
        rec.shape = shape;
        rec.lambda_adv = weights.lambda_adv;
        rec.lambda_shape = weights.lambda_shape;
        rec.total = total_loss(adv.value, shape, weights);
        rec.mean_confidence = adv.value;
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back(rec);
    }

    report.final_confidence =
        adv_loss(result.cloud, config.views, detector, nullptr, 0, false, config.render).confidences;
    double acc = 0;
    for (std::size_t v = 0; v < config.views.size(); ++v)
        acc += lcr(report.initial_confidence[v], report.final_confidence[v]);
    report.final_lcr = acc / static_cast<double>(config.views.size());
    report.final_shape = shape_loss(result.cloud, reference, map);
    report.realism = realism(cloud, result.cloud, config.views, config.render);
    return result;
}

std::string AttackReport::to_json(bool include_timing) const {
    nlohmann::json j;
    nlohmann::json ep = nlohmann::json::array();
    for (const auto &r : epochs) {
        nlohmann::json e{{"epoch", r.epoch},
                         {"L_adv", r.adv},
                         {"L_shape", r.shape},
                         {"lambda_adv", r.lambda_adv},
                         {"lambda_shape", r.lambda_shape},
                         {"L_total", r.total},
                         {"mean_confidence", r.mean_confidence}};
        if (include_timing)
            e["wall_ms"] = r.wall_ms;
        ep.push_back(e);
    }
    j["epochs"] = ep;
    j["initial_confidence"] = initial_confidence;
    j["final_confidence"] = final_confidence;
    j["final_lcr"] = final_lcr;
    j["final_shape_loss"] = final_shape;
    j["realism"] = {{"mean_psnr_db", std::isfinite(realism.mean_psnr) ? nlohmann::json(realism.mean_psnr)
                                                                       : nlohmann::json("inf")},
                    {"mean_ssim", realism.mean_ssim}};
    return j.dump(1);
}

std::string AttackReport::to_csv(bool include_timing) const {
    std::ostringstream out;
    out << "epoch,L_adv,L_shape,lambda_adv,lambda_shape,L_total,mean_confidence" << (include_timing ? ",wall_ms" : "")
        << '\n';
    for (const auto &r : epochs) {
        out << r.epoch << ',' << fmt(r.adv) << ',' << fmt(r.shape) << ',' << fmt(r.lambda_adv) << ','
            << fmt(r.lambda_shape) << ',' << fmt(r.total) << ',' << fmt(r.mean_confidence);
        if (include_timing)
            out << ',' << fmt(r.wall_ms);
        out << '\n';
    }
    return out.str();
}

} // namespace gaussadv
