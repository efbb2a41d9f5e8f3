// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Adversarial optimization of a Gaussian cloud against a differentiable
// victim: expected confidence over a viewpoint set, a shape-preservation
// term, loss-adaptive weighting and per-slot masking of the update.
#pragma once

#include "gaussadv/augmentation.hpp"
#include "gaussadv/camera.hpp"
#include "gaussadv/gaussian.hpp"
#include "gaussadv/metrics.hpp"
#include "gaussadv/renderer.hpp"
#include "gaussadv/victim.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace gaussadv {

/// Subset of the 14 parameter slots the optimizer may change.
struct DimensionMask {
    std::array<bool, kParamsPerGaussian> selected{};

    static DimensionMask geometry();   ///< position, rotation, scale
    static DimensionMask appearance(); ///< color, opacity
    static DimensionMask full();

    /// "full", "geometry", "appearance" or a comma list of slot names (px, qw, sx, cr, a, ...).
    static DimensionMask parse(const std::string &text);
    std::string to_string() const;

    bool contains(int slot) const { return selected[static_cast<std::size_t>(slot)]; }
    int count() const;
    void validate() const;
    bool operator==(const DimensionMask &) const = default;
};

/// Slot names in parameter order.
const std::array<const char *, kParamsPerGaussian> &slot_names();

struct WeightState {
    double lambda_adv = 0.6;
    double lambda_shape = 0.4;
    double gamma_scale = 10.0;
    double epsilon = 1e-8;
    double lambda_min = 0.4;
};

/// Loss-adaptive weights: L̂ = L̄_adv/γ, w_adv = 1/(L̂+ε), w_shape = L̄_shape,
/// normalized, λ_shape clamped below at λ_min, λ_adv = 1 − λ_shape.
WeightState dynamic_weights(double mean_adv, double mean_shape, const WeightState &state);

/// Mean over paired Gaussians of ‖Δp‖² + ‖Δs‖² + ‖q ⊗ q₀⁻¹ − (1,0,0,0)‖².
/// `map.source[j]` is the row of `initial` paired with row j of `cloud`.
double shape_loss(const GaussianCloud &cloud, const GaussianCloud &initial, const IndexMap &map);
double shape_loss(const GaussianCloud &cloud, const GaussianCloud &initial, const IndexMap &map,
                  ParamGradients &grad);

inline double total_loss(double adv, double shape, const WeightState &w) {
    return w.lambda_adv * adv + w.lambda_shape * shape;
}

struct AdvLoss {
    double value = 0;
    std::vector<double> confidences;
    ParamGradients grad; ///< empty unless requested
};

/// Mean victim confidence over augmented renders of every view. Augmentation
/// draws come from (augment.seed, epoch, view index); pass nullptr to skip it.
AdvLoss adv_loss(const GaussianCloud &cloud, const ViewpointSet &views, const DifferentiableDetector &detector,
                 const AugmentConfig *augment, std::uint64_t epoch, bool with_grad,
                 const RenderOptions &options = {});

enum class Optimizer {
    GradientDescent, ///< θ ← θ − η·g
    Adam,            ///< per-slot normalized steps of size ≈ η
};

Optimizer parse_optimizer(const std::string &name);
std::string to_string(Optimizer optimizer);

struct AttackConfig {
    int epochs = 50;
    double learning_rate = 0.03;
    Optimizer optimizer = Optimizer::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    DimensionMask mask = DimensionMask::full();
    ViewpointSet views;
    AugmentConfig augment;
    bool augment_enabled = true;
    std::string detector = "toy";
    std::uint64_t seed = 0;
    WeightState weights;
    RenderOptions render;
    /// Overrides the dynamic weights when set.
    std::optional<double> fixed_lambda_shape;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double adv = 0;
    double shape = 0;
    double lambda_adv = 0;
    double lambda_shape = 0;
    double total = 0;
    double mean_confidence = 0;
    double wall_ms = 0;
};

struct AttackReport {
    std::vector<EpochRecord> epochs;
    std::vector<double> initial_confidence; ///< clean renders, viewpoint order
    std::vector<double> final_confidence;
    double final_lcr = 0; ///< mean per-view LCR
    double final_shape = 0;
    RealismSummary realism;

    /// Wall times are excluded unless asked for, so reports of identical runs are byte-identical.
    std::string to_json(bool include_timing = false) const;
    std::string to_csv(bool include_timing = false) const;
};

struct AttackResult {
    GaussianCloud cloud;
    AttackReport report;
};

/// Shape loss is measured against `cloud` itself.
AttackResult run_attack(const GaussianCloud &cloud, const AttackConfig &config,
                        const DifferentiableDetector &detector);
/// Shape loss is measured against `reference` through `map` (e.g. the pre-pruning cloud).
AttackResult run_attack(const GaussianCloud &cloud, const AttackConfig &config,
                        const DifferentiableDetector &detector, const GaussianCloud &reference, const IndexMap &map);

/// Renormalizes rotations by rescaling only selected quaternion slots, and
/// clamps selected scale/color/opacity slots into range.
void project_masked(GaussianCloud &cloud, const DimensionMask &mask);

} // namespace gaussadv
