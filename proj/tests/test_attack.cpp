// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/attack.hpp"
#include "gaussadv/synthetic.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>
#include <vector>

using namespace gaussadv;

namespace {

class ConstantDetector final : public DifferentiableDetector {
public:
    explicit ConstantDetector(double c) : mC(c) {}
    double confidence(const RgbImage &) const override { return mC; }
    double confidence_with_grad(const RgbImage &rgb, RgbImage &grad) const override {
        grad = RgbImage(rgb.height(), rgb.width(), 0.0);
        return mC;
    }

private:
    double mC;
};

class ThrowingDetector final : public DifferentiableDetector {
public:
    double confidence(const RgbImage &) const override { throw std::runtime_error("model crashed"); }
    double confidence_with_grad(const RgbImage &, RgbImage &) const override {
        throw std::runtime_error("model crashed");
    }
};

/// Small but non-trivial attack setting: 300-Gaussian box-car, 4 views at 32².
struct Scene {
    GaussianCloud cloud = make_synthetic_cloud({"box-car", 300, 7});
    ViewpointSet views = make_orbit_viewpoints(4, {3.0}, 10, 32, 60);
    ToyDetector detector = make_detector();

    ToyDetector make_detector() const {
        const RgbImage ref = render(cloud, views.poses[0]).rgb;
        return ToyDetector(calibrate_toy(make_toy_spec(2024, 8, 5, 32), ref));
    }

    AttackConfig config(int epochs) const {
        AttackConfig c;
        c.epochs = epochs;
        c.views = views;
        c.seed = 3;
        return c;
    }
};

const Scene &scene() {
    static const Scene s;
    return s;
}

/// Hamilton product written out independently of the library.
Eigen::Vector4d hamilton(const Eigen::Vector4d &a, const Eigen::Vector4d &b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3], a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1], a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

} // namespace

TEST(DynamicWeights, WorkedExample) {
    const WeightState w = dynamic_weights(1.0, 0.5, WeightState{});
    EXPECT_DOUBLE_EQ(w.lambda_shape, 0.4);
    EXPECT_DOUBLE_EQ(w.lambda_adv, 0.6);
}

TEST(DynamicWeights, UnclampedBranch) {
    // L̂ = 10/10 = 1, w_adv ≈ 1, w_shape = 3 → λ_shape ≈ 0.75.
    const WeightState w = dynamic_weights(10.0, 3.0, WeightState{});
    const double w_adv = 1.0 / (1.0 + 1e-8);
    EXPECT_NEAR(w.lambda_shape, 3.0 / (w_adv + 3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(w.lambda_adv + w.lambda_shape, 1.0, 1e-15);
}

TEST(DynamicWeights, LimitOfLargeAdversarialLoss) {
    // w_adv → 0 leaves λ_shape = w_shape / (w_shape + ε).
    for (double adv : {1e300, std::numeric_limits<double>::infinity()}) {
        const WeightState w = dynamic_weights(adv, 1.0, WeightState{});
        EXPECT_NEAR(w.lambda_shape, 1.0 / (1.0 + 1e-8), 1e-15);
        EXPECT_GE(w.lambda_shape, 1.0 - 1e-8);
        EXPECT_NEAR(w.lambda_adv, 0.0, 1e-8);
    }
}

TEST(DynamicWeights, SimplexAndClampForRandomInputs) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> e(-8, 4);
    for (int i = 0; i < 1000; ++i) {
        const double a = std::pow(10.0, e(rng)), s = std::pow(10.0, e(rng));
        const WeightState w = dynamic_weights(a, s, WeightState{});
        EXPECT_EQ(w.lambda_adv + w.lambda_shape, 1.0);
        EXPECT_GE(w.lambda_shape, 0.4);
        EXPECT_GE(w.lambda_adv, 0.0);
    }
    EXPECT_THROW(dynamic_weights(-1, 0, WeightState{}), Error);
}

TEST(TotalLoss, Arithmetic) {
    WeightState w;
    w.lambda_adv = 0.6;
    w.lambda_shape = 0.4;
    EXPECT_NEAR(total_loss(0.5, 0.2, w), 0.38, 1e-15);
    w.lambda_adv = 1;
    w.lambda_shape = 0;
    EXPECT_EQ(total_loss(0.5, 0.2, w), 0.5);
}

TEST(ShapeLoss, ZeroForIdenticalClouds) {
    const GaussianCloud c = random_cloud(50, 1);
    const IndexMap id = IndexMap::identity(50);
    EXPECT_EQ(shape_loss(c, c, id), 0.0);
    ParamGradients g;
    EXPECT_EQ(shape_loss(c, c, id, g), 0.0);
    EXPECT_TRUE((g.array() == 0).all());
}

TEST(ShapeLoss, TranslationGivesSquaredOffset) {
    for (int n : {1, 7, 100}) {
        const GaussianCloud c = random_cloud(n, static_cast<std::uint64_t>(n));
        GaussianCloud moved = c;
        for (Eigen::Index j = 0; j < n; ++j)
            moved.position(j).x() += 0.1;
        EXPECT_NEAR(shape_loss(moved, c, IndexMap::identity(static_cast<std::size_t>(n))), 0.01, 1e-15);
    }
}

TEST(ShapeLoss, HalfTurnAboutZMatchesQuaternionOracle) {
    const int n = 8;
    std::vector<Gaussian> gs(n);
    for (int j = 0; j < n; ++j)
        gs[static_cast<std::size_t>(j)].position = Eigen::Vector3d(0.1 * j, 0, 0);
    const GaussianCloud initial(gs);
    GaussianCloud turned = initial;
    turned.rotation(3) = Eigen::Vector4d(0, 0, 0, 1);
    const Eigen::Vector4d q0(1, 0, 0, 0);
    const Eigen::Vector4d q0_inv(q0[0], -q0[1], -q0[2], -q0[3]);
    const Eigen::Vector4d rel = hamilton(Eigen::Vector4d(0, 0, 0, 1), q0_inv);
    const double expected = (rel - Eigen::Vector4d(1, 0, 0, 0)).squaredNorm() / n;
    EXPECT_NEAR(expected, 2.0 / n, 1e-15);
    EXPECT_NEAR(shape_loss(turned, initial, IndexMap::identity(n)), expected, 1e-15);
}

TEST(ShapeLoss, RotationTermAgainstOracleForRandomPairs) {
    const GaussianCloud a = random_cloud(30, 2), b = random_cloud(30, 3);
    GaussianCloud mixed = a;
    double expected = 0;
    for (Eigen::Index j = 0; j < 30; ++j) {
        mixed.rotation(j) = b.rotation(j);
        const Eigen::Vector4d q0 = a.rotation(j);
        const Eigen::Vector4d inv = Eigen::Vector4d(q0[0], -q0[1], -q0[2], -q0[3]) / q0.squaredNorm();
        expected += (hamilton(b.rotation(j), inv) - Eigen::Vector4d(1, 0, 0, 0)).squaredNorm();
    }
    EXPECT_NEAR(shape_loss(mixed, a, IndexMap::identity(30)), expected / 30, 1e-12);
}

TEST(ShapeLoss, GradientMatchesFiniteDifferences) {
    const GaussianCloud initial = random_cloud(12, 4);
    GaussianCloud cloud = random_cloud(12, 5);
    IndexMap map;
    map.source = {11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
    ParamGradients g;
    shape_loss(cloud, initial, map, g);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 12; ++j)
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            GaussianCloud p = cloud, m = cloud;
            p.params()(j, k) += h;
            m.params()(j, k) -= h;
            const double fd = (shape_loss(p, initial, map) - shape_loss(m, initial, map)) / (2 * h);
            if (k >= kCr) {
                EXPECT_EQ(g(j, k), 0.0);
            } else {
                EXPECT_NEAR(g(j, k), fd, 1e-7 * std::max(1.0, std::abs(fd)));
            }
        }
}

TEST(ShapeLoss, UnpairedGaussianRaised) {
    const GaussianCloud c = random_cloud(5, 1);
    IndexMap bad;
    bad.source = {0, 1, 2};
    try {
        shape_loss(c, c, bad);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnpairedGaussian);
    }
    bad.source = {0, 1, 2, 3, 9};
    EXPECT_THROW(shape_loss(c, c, bad), Error);
}

TEST(AdvLoss, ConstantDetector) {
    const Scene &s = scene();
    const ConstantDetector det(0.7);
    AugmentConfig aug;
    for (const AugmentConfig *a : std::vector<const AugmentConfig *>{nullptr, &aug}) {
        const AdvLoss l = adv_loss(s.cloud, s.views, det, a, 0, true);
        EXPECT_NEAR(l.value, 0.7, 1e-15);
        EXPECT_TRUE((l.grad.array() == 0).all());
    }
    EXPECT_NEAR(adv_loss(random_cloud(20, 9), s.views, det, nullptr, 0, false).value, 0.7, 1e-15);
}

TEST(AdvLoss, SingleViewEqualsThatConfidence) {
    const Scene &s = scene();
    ViewpointSet one = s.views;
    one.poses.resize(1);
    const AdvLoss l = adv_loss(s.cloud, one, s.detector, nullptr, 0, false);
    EXPECT_EQ(l.value, s.detector.confidence(render(s.cloud, one.poses[0]).rgb));
}

TEST(AdvLoss, MeanOfPerViewConfidences) {
    const Scene &s = scene();
    const ViewpointSet views = make_orbit_viewpoints(12, {3, 5, 10}, 10, 32, 60);
    const AugmentConfig aug;
    const AdvLoss l = adv_loss(s.cloud, views, s.detector, &aug, 2, false);
    ASSERT_EQ(l.confidences.size(), 36u);
    double acc = 0;
    for (double c : l.confidences) {
        EXPECT_TRUE(c >= 0 && c <= 1);
        acc += c;
    }
    EXPECT_NEAR(l.value, acc / 36, 1e-9);
}

TEST(AdvLoss, GradientMatchesFiniteDifferences) {
    // The shadow threshold is a stop-gradient statistic of the depth map, so
    // with the shadow active only the color slots (which leave depth fixed)
    // are compared; with it disabled every slot is.
    const GaussianCloud cloud = random_cloud(6, 12, 0.4, 0.08, 0.25);
    const ViewpointSet views = make_orbit_viewpoints(2, {3.0}, 10, 24, 60);
    const ToyDetector det(calibrate_toy(make_toy_spec(1, 4, 3, 16), render(cloud, views.poses[0]).rgb));
    AugmentConfig shadowed;
    shadowed.sigma0 = 0.002;
    shadowed.occl_probability = 1.0;
    shadowed.occl_p_size = 0.4;
    AugmentConfig unshadowed = shadowed;
    unshadowed.shadow_strength = 1.0;
    struct Case {
        const char *name;
        const AugmentConfig *augment;
        int last_slot;
        int min_checked;
    };
    const Case cases[] = {{"plain", nullptr, kAlpha, 40},
                          {"augmented without shadow", &unshadowed, kAlpha, 40},
                          {"augmented colors", &shadowed, kCb, 12}};
    const double h = 1e-5;
    for (const Case &c : cases) {
        const AdvLoss l = adv_loss(cloud, views, det, c.augment, 1, true);
        int checked = 0;
        double worst = 0;
        for (Eigen::Index j = 0; j < cloud.size(); ++j)
            for (int k = c.augment == &shadowed ? kCr : 0; k <= c.last_slot; ++k) {
                if (std::abs(l.grad(j, k)) <= 1e-6)
                    continue;
                GaussianCloud p = cloud, m = cloud;
                p.params()(j, k) += h;
                m.params()(j, k) -= h;
                const double fd = (adv_loss(p, views, det, c.augment, 1, false).value -
                                   adv_loss(m, views, det, c.augment, 1, false).value) /
                                  (2 * h);
                worst = std::max(worst, oracle::rel_error(l.grad(j, k), fd));
                ++checked;
            }
        EXPECT_GE(checked, c.min_checked) << c.name;
        EXPECT_LT(worst, 1e-3) << c.name;
    }
}

TEST(AdvLoss, DetectorFailurePropagates) {
    const Scene &s = scene();
    try {
        adv_loss(s.cloud, s.views, ThrowingDetector{}, nullptr, 0, false);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::DetectorFailure);
    }
    EXPECT_THROW(adv_loss(s.cloud, ViewpointSet{}, s.detector, nullptr, 0, false), Error);
}

TEST(Mask, PresetsAndParsing) {
    EXPECT_EQ(DimensionMask::geometry().count(), 10);
    EXPECT_EQ(DimensionMask::appearance().count(), 4);
    EXPECT_EQ(DimensionMask::full().count(), 14);
    EXPECT_EQ(DimensionMask::parse("geometry"), DimensionMask::geometry());
    EXPECT_EQ(DimensionMask::parse("appearance"), DimensionMask::appearance());
    const DimensionMask m = DimensionMask::parse("px,qw,a");
    EXPECT_EQ(m.count(), 3);
    EXPECT_TRUE(m.contains(kPx) && m.contains(kQw) && m.contains(kAlpha));
    EXPECT_EQ(DimensionMask::parse(m.to_string()), m);
    EXPECT_THROW(DimensionMask::parse("px,bogus"), Error);
    EXPECT_THROW(DimensionMask{}.validate(), Error);
}

TEST(Attack, RejectsZeroEpochs) {
    const Scene &s = scene();
    AttackConfig c = s.config(0);
    try {
        run_attack(s.cloud, c, s.detector);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidParameter);
    }
}

TEST(Attack, ZeroLearningRateIsNoOp) {
    const Scene &s = scene();
    AttackConfig c = s.config(1);
    c.learning_rate = 0;
    for (Optimizer o : {Optimizer::GradientDescent, Optimizer::Adam}) {
        c.optimizer = o;
        const AttackResult r = run_attack(s.cloud, c, s.detector);
        EXPECT_TRUE(r.cloud.params() == s.cloud.params());
        EXPECT_EQ(r.report.epochs.size(), 1u);
        EXPECT_EQ(r.report.final_lcr, 0.0);
    }
}

TEST(Attack, GradientDescentStepFollowsUpdateRule) {
    const Scene &s = scene();
    AttackConfig c = s.config(1);
    c.optimizer = Optimizer::GradientDescent;
    c.learning_rate = 1e-3;
    c.fixed_lambda_shape = 0.25;
    GaussianCloud start = s.cloud;
    start.params().col(kPx).array() += 0.01; // non-zero shape gradient
    const AttackResult r = run_attack(start, c, s.detector, s.cloud, IndexMap::identity(300));

    AugmentConfig aug = c.augment;
    aug.seed = c.augment.seed ^ c.seed;
    const AdvLoss adv = adv_loss(start, c.views, s.detector, &aug, 0, true);
    ParamGradients gs;
    shape_loss(start, s.cloud, IndexMap::identity(300), gs);
    const ParamGradients expected = start.params() - c.learning_rate * (0.75 * adv.grad + 0.25 * gs);
    // Quaternion slots are renormalized afterwards; compare the others directly.
    for (Eigen::Index j = 0; j < start.size(); ++j)
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            if (k >= kQw && k <= kQz)
                continue;
            const double floor = k >= kSx && k <= kSz ? kMinScale : -1e9;
            EXPECT_NEAR(r.cloud.params()(j, k), std::max(expected(j, k), floor), 1e-12);
        }
    EXPECT_EQ(r.report.epochs[0].lambda_shape, 0.25);
    EXPECT_EQ(r.report.epochs[0].adv, adv.value);
}

TEST(Attack, MaskedSlotsBitIdenticalAfterFiftyEpochs) {
    const Scene &s = scene();
    for (const DimensionMask &mask : {DimensionMask::appearance(), DimensionMask::geometry()}) {
        AttackConfig c = s.config(50);
        c.mask = mask;
        const AttackResult r = run_attack(s.cloud, c, s.detector);
        int changed = 0;
        for (Eigen::Index j = 0; j < s.cloud.size(); ++j)
            for (int k = 0; k < kParamsPerGaussian; ++k) {
                if (!mask.contains(k)) {
                    ASSERT_EQ(r.cloud.params()(j, k), s.cloud.params()(j, k)) << "slot " << slot_names()[k];
                } else {
                    changed += r.cloud.params()(j, k) != s.cloud.params()(j, k) ? 1 : 0;
                }
            }
        EXPECT_GT(changed, 0);
    }
}

TEST(Attack, ProjectionKeepsParametersValid) {
    const Scene &s = scene();
    AttackConfig c = s.config(10);
    c.learning_rate = 0.2;
    const AttackResult r = run_attack(s.cloud, c, s.detector);
    for (Eigen::Index j = 0; j < r.cloud.size(); ++j) {
        EXPECT_NEAR(r.cloud.rotation(j).norm(), 1.0, 1e-12);
        EXPECT_GE(r.cloud.scale(j).minCoeff(), kMinScale);
        EXPECT_GE(r.cloud.color(j).minCoeff(), 0.0);
        EXPECT_LE(r.cloud.color(j).maxCoeff(), 1.0);
        EXPECT_TRUE(r.cloud.opacity(j) >= 0 && r.cloud.opacity(j) <= 1);
    }
}

TEST(Attack, ForcedShapeWeightDescendsShapeLoss) {
    const Scene &s = scene();
    GaussianCloud start = s.cloud;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0, 0.02);
    for (Eigen::Index j = 0; j < start.size(); ++j) {
        for (int k : {kPx, kPy, kPz, kSx, kSy, kSz})
            start.params()(j, k) = std::max(kMinScale, start.params()(j, k) + n(rng));
        start.rotation(j) = (Eigen::Vector4d(start.rotation(j)) + Eigen::Vector4d(n(rng), n(rng), n(rng), n(rng))).normalized();
    }
    AttackConfig c = s.config(20);
    c.optimizer = Optimizer::GradientDescent;
    c.learning_rate = 1e-3;
    c.fixed_lambda_shape = 1.0;
    const AttackResult r = run_attack(start, c, s.detector, s.cloud, IndexMap::identity(300));
    ASSERT_EQ(r.report.epochs.size(), 20u);
    for (std::size_t e = 1; e < r.report.epochs.size(); ++e)
        EXPECT_LE(r.report.epochs[e].shape, r.report.epochs[e - 1].shape);
    EXPECT_LT(r.report.final_shape, r.report.epochs[0].shape);
}

TEST(Attack, DeterministicEndToEnd) {
    const Scene &s = scene();
    const AttackConfig c = s.config(5);
    const AttackResult a = run_attack(s.cloud, c, s.detector), b = run_attack(s.cloud, c, s.detector);
    EXPECT_TRUE(a.cloud.params() == b.cloud.params());
    EXPECT_EQ(a.report.to_json(), b.report.to_json());
    EXPECT_EQ(a.report.to_csv(), b.report.to_csv());
    AttackConfig other = c;
    other.seed = 4;
    EXPECT_FALSE(run_attack(s.cloud, other, s.detector).cloud.params() == a.cloud.params());
}

TEST(Attack, ConfidenceTrendsDown) {
    const Scene &s = scene();
    const AttackResult r = run_attack(s.cloud, s.config(30), s.detector);
    ASSERT_EQ(r.report.epochs.size(), 30u);
    EXPECT_LT(r.report.epochs.back().mean_confidence, r.report.epochs.front().mean_confidence);
    EXPECT_GT(r.report.final_lcr, 0.0);
    for (double c : r.report.final_confidence)
        EXPECT_TRUE(c >= 0 && c <= 1);
    ASSERT_EQ(r.report.initial_confidence.size(), 4u);
}

TEST(Attack, ReportSerialization) {
    const Scene &s = scene();
    const AttackResult r = run_attack(s.cloud, s.config(2), s.detector);
    const std::string csv = r.report.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,L_adv,L_shape,lambda_adv,lambda_shape,L_total,mean_confidence");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_EQ(r.report.to_json().find("wall_ms"), std::string::npos);
    EXPECT_NE(r.report.to_json(true).find("wall_ms"), std::string::npos);
    EXPECT_EQ(parse_optimizer("gd"), Optimizer::GradientDescent);
    EXPECT_EQ(parse_optimizer(to_string(Optimizer::Adam)), Optimizer::Adam);
    EXPECT_THROW(parse_optimizer("sgd-nesterov"), Error);
}
