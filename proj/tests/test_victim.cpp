// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/camera.hpp"
#include "gaussadv/metrics.hpp"
#include "gaussadv/png.hpp"
#include "gaussadv/synthetic.hpp"
#include "gaussadv/victim.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <random>

using namespace gaussadv;

namespace {

RgbImage random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    RgbImage img(h, w);
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < img[c].size(); ++i)
            img[c](i) = u(rng);
    return img;
}

/// Values on the 8-bit grid survive the PNG round trip exactly.
RgbImage quantized_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, 255);
    RgbImage img(h, w);
    for (int c = 0; c < 3; ++c)
        for (Eigen::Index i = 0; i < img[c].size(); ++i)
            img[c](i) = u(rng) / 255.0;
    return img;
}

ErrorKind kind_of(const std::function<void()> &f) {
    try {
        f();
    } catch (const Error &e) {
        return e.kind();
    }
    ADD_FAILURE() << "no exception";
    return ErrorKind::ConfigError;
}

struct StubMode {
    explicit StubMode(const char *mode) { setenv("GAUSSADV_STUB_MODE", mode, 1); }
    ~StubMode() { unsetenv("GAUSSADV_STUB_MODE"); }
};

AdapterConfig stub_config(const TempDir &dir, std::optional<int> timeout = 20000) {
    AdapterConfig c;
    c.executable = GAUSSADV_STUB_ADAPTER;
    c.exchange_dir = (dir.path / "exchange").string();
    c.timeout_ms = timeout;
    return c;
}

} // namespace

TEST(ToyDetector, ZeroImageScoresSigmoidOfBias) {
    ToyDetectorSpec spec = make_toy_spec();
    for (double bias : {0.0, 1.5, -3.0}) {
        spec.bias = bias;
        const ToyDetector det(spec);
        EXPECT_NEAR(det.confidence(RgbImage(40, 56, 0.0)), 1.0 / (1.0 + std::exp(-bias)), 1e-15);
    }
}

TEST(ToyDetector, WeightsAreSeeded) {
    EXPECT_EQ(make_toy_spec(5).weights, make_toy_spec(5).weights);
    EXPECT_NE(make_toy_spec(5).weights, make_toy_spec(6).weights);
    const ToyDetectorSpec s = make_toy_spec();
    EXPECT_EQ(s.weights.size(), 48u);
    EXPECT_EQ(s.weights[0].size(), 25u);
    EXPECT_EQ(s.bias, 0.0);
}

TEST(ToyDetector, GradientMatchesFiniteDifferences) {
    // Bias fitted per image so the logistic is not saturated.
    ToyDetectorSpec spec = make_toy_spec();
    spec.calibration_target = 0.5;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const RgbImage img = random_image(16, 16, seed);
        const ToyDetector det(calibrate_toy(spec, img));
        RgbImage g;
        const double c = det.confidence_with_grad(img, g);
        EXPECT_EQ(c, det.confidence(img));
        const double h = 1e-6;
        int checked = 0;
        double worst = 0;
        for (int ch = 0; ch < 3; ++ch)
            for (Eigen::Index i = 0; i < img[ch].size(); ++i) {
                RgbImage p = img, m = img;
                p[ch](i) += h;
                m[ch](i) -= h;
                const double fd = (det.confidence(p) - det.confidence(m)) / (2 * h);
                if (std::abs(g[ch](i)) <= 1e-6)
                    continue;
                ++checked;
                worst = std::max(worst, oracle::rel_error(g[ch](i), fd));
            }
        EXPECT_GT(checked, 600);
        EXPECT_LT(worst, 1e-3);
    }
}

TEST(ToyDetector, CalibratedOnCleanBoxCar) {
    const GaussianCloud car = make_synthetic_cloud({"box-car", 2000, 7});
    const ViewpointSet v = make_orbit_viewpoints(1, {5.0}, 10, 256, 60);
    const RgbImage ref = render(car, v.poses[0]).rgb;
    const ToyDetector det(calibrate_toy(make_toy_spec(), ref));
    const double c = det.confidence(ref);
    EXPECT_GE(c, 0.8);
    EXPECT_LT(c, 0.8 + 1e-9);
    // An empty scene scores lower than the car.
    EXPECT_LT(det.confidence(RgbImage(256, 256, 0.0)), c);
    ToyDetectorSpec bad = make_toy_spec();
    bad.calibration_target = 1.0;
    EXPECT_THROW(calibrate_toy(bad, ref), Error);
}

TEST(ToyDetector, PureFunctionOfImageAndSpec) {
    const RgbImage img = random_image(50, 70, 4);
    const ToyDetector a(make_toy_spec(9)), b(make_toy_spec(9));
    const double c = a.confidence(img);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(a.confidence(img), c);
        EXPECT_EQ(b.confidence(img), c);
    }
    RgbImage g1, g2;
    a.confidence_with_grad(img, g1);
    b.confidence_with_grad(img, g2);
    EXPECT_TRUE(g1 == g2);
}

TEST(ToyDetector, LipschitzBoundHolds) {
    ToyDetectorSpec spec = make_toy_spec();
    spec.bias = -1.0;
    const ToyDetector det(spec);
    std::mt19937_64 rng(6);
    for (auto [h, w] : {std::pair{64, 64}, std::pair{40, 90}, std::pair{128, 128}}) {
        const double lip = det.lipschitz_bound(h, w);
        ASSERT_GT(lip, 0);
        const RgbImage img = random_image(h, w, static_cast<std::uint64_t>(h * w));
        const double c0 = det.confidence(img);
        std::uniform_int_distribution<int> py(0, h - 1), px(0, w - 1), pc(0, 2);
        for (int t = 0; t < 100; ++t) {
            RgbImage p = img;
            const double eps = 0.05;
            p[pc(rng)](py(rng), px(rng)) += eps;
            EXPECT_LE(std::abs(det.confidence(p) - c0), lip * eps);
        }
        // The bound also caps every gradient entry.
        RgbImage g;
        det.confidence_with_grad(img, g);
        for (int c = 0; c < 3; ++c)
            EXPECT_LE(g[c].abs().maxCoeff(), lip);
    }
}

TEST(ToyDetector, SpecJsonRoundTrip) {
    TempDir dir;
    ToyDetectorSpec s = make_toy_spec(77, 6, 3, 32, 250.0, 0.02);
    s.bias = -0.123456789012345;
    const ToyDetectorSpec r = toy_spec_from_json(toy_spec_to_json(s));
    EXPECT_EQ(r.weights, s.weights);
    EXPECT_EQ(r.readout, s.readout);
    EXPECT_EQ(r.bias, s.bias);
    EXPECT_EQ(r.gain, s.gain);
    EXPECT_EQ(r.threshold, s.threshold);
    const std::string path = (dir.path / "det.json").string();
    save_toy_spec(s, path);
    const RgbImage img = random_image(32, 32, 1);
    EXPECT_EQ(ToyDetector(load_toy_spec(path)).confidence(img), ToyDetector(s).confidence(img));
    EXPECT_EQ(kind_of([] { toy_spec_from_json("{not json"); }), ErrorKind::UnsupportedFormat);
    EXPECT_EQ(kind_of([] { toy_spec_from_json("{\"seed\": 1}"); }), ErrorKind::MissingField);
}

TEST(ToyDetector, EmptyImageRejected) {
    EXPECT_EQ(kind_of([] { ToyDetector(make_toy_spec()).confidence(RgbImage()); }), ErrorKind::ShapeMismatch);
}

TEST(Resample, AreaMatrixRowsSumToOne) {
    for (auto [o, i] : {std::pair{64, 256}, std::pair{64, 16}, std::pair{7, 13}, std::pair{5, 5}}) {
        const Eigen::MatrixXd r = area_resample_matrix(o, i);
        EXPECT_LT((r.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
        EXPECT_GE(r.minCoeff(), 0.0);
    }
    EXPECT_TRUE(area_resample_matrix(5, 5).isIdentity());
}

TEST(ParseScores, ValidAndMalformedPayloads) {
    const auto s = parse_scores("{\"index\": 1, \"confidence\": 0.25}\n\n{\"index\": 0, \"confidence\": 1, \"label\": \"car\"}\n", 2);
    EXPECT_EQ(s[0].value, 1.0);
    EXPECT_EQ(s[0].label.value_or(""), "car");
    EXPECT_EQ(s[1].value, 0.25);
    EXPECT_FALSE(s[1].label);
    try {
        parse_scores("{\"index\": 0, \"confidence\": 0.5}\n{\"index\": 2, \"confidence\": 0.5}\n", 3);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::MalformedResponse);
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
    }
    EXPECT_EQ(kind_of([] { parse_scores("{\"index\": 0, \"confidence\": NaN}\n", 1); }), ErrorKind::NonFiniteConfidence);
    EXPECT_EQ(kind_of([] { parse_scores("{\"index\": 0, \"confidence\": Infinity}\n", 1); }),
              ErrorKind::NonFiniteConfidence);
    EXPECT_EQ(kind_of([] { parse_scores("garbage\n", 1); }), ErrorKind::MalformedResponse);
    EXPECT_EQ(kind_of([] { parse_scores("{\"index\": 0, \"confidence\": 1.5}\n", 1); }), ErrorKind::MalformedResponse);
    EXPECT_EQ(kind_of([] { parse_scores("{\"index\": 0, \"confidence\": 0.5}\n{\"index\": 0, \"confidence\": 0.5}\n", 1); }),
              ErrorKind::MalformedResponse);
    EXPECT_EQ(kind_of([] { parse_scores("{\"confidence\": 0.5}\n", 1); }), ErrorKind::MalformedResponse);
}

TEST(Adapter, EchoStub) {
    TempDir dir;
    const StubMode mode("echo");
    const std::vector<RgbImage> views = {random_image(8, 12, 1), random_image(8, 12, 2), random_image(8, 12, 3)};
    const auto scores = external_score(views, stub_config(dir));
    ASSERT_EQ(scores.size(), 3u);
    for (const auto &s : scores)
        EXPECT_EQ(s.value, 0.5);
    EXPECT_TRUE(std::filesystem::exists(dir.path / "exchange" / "view_0002.png"));
    std::ifstream mf(dir.path / "exchange" / "manifest.json");
    std::string manifest((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    EXPECT_NE(manifest.find("\"count\":3"), std::string::npos);
    EXPECT_NE(manifest.find("\"resolution\":[12,8]"), std::string::npos);
}

TEST(Adapter, BrightnessStubMatchesMetric) {
    TempDir dir;
    const StubMode mode("brightness");
    std::vector<RgbImage> views;
    for (std::uint64_t s = 0; s < 4; ++s)
        views.push_back(quantized_image(20, 30, s));
    const auto scores = external_score(views, stub_config(dir));
    for (std::size_t i = 0; i < views.size(); ++i)
        EXPECT_NEAR(scores[i].value, brightness(views[i]), 1e-6);
}

TEST(Adapter, LabelsArePassedThrough) {
    TempDir dir;
    const StubMode mode("label");
    const auto scores = external_score({random_image(4, 4, 1)}, stub_config(dir));
    EXPECT_EQ(scores[0].value, 0.25);
    EXPECT_EQ(scores[0].label.value_or(""), "car");
}

TEST(Adapter, MissingIndexIsMalformedAndNamed) {
    TempDir dir;
    const StubMode mode("missing");
    try {
        external_score({random_image(4, 4, 1), random_image(4, 4, 2)}, stub_config(dir));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::MalformedResponse);
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
    }
}

TEST(Adapter, NanIsNonFinite) {
    TempDir dir;
    const StubMode mode("nan");
    EXPECT_EQ(kind_of([&] { external_score({random_image(4, 4, 1)}, stub_config(dir)); }),
              ErrorKind::NonFiniteConfidence);
}

TEST(Adapter, FailingProcessIsDetectorFailure) {
    TempDir dir;
    const StubMode mode("fail");
    EXPECT_EQ(kind_of([&] { external_score({random_image(4, 4, 1)}, stub_config(dir)); }),
              ErrorKind::DetectorFailure);
}

TEST(Adapter, TimeoutEnforced) {
    TempDir dir;
    const StubMode mode("sleep");
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_EQ(kind_of([&] { external_score({random_image(4, 4, 1)}, stub_config(dir, 200)); }),
              ErrorKind::AdapterTimeout);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(4));

    setenv("GAUSSADV_ADAPTER_TIMEOUT_MS", "150", 1);
    EXPECT_EQ(stub_config(dir, std::nullopt).effective_timeout_ms(), 150);
    EXPECT_EQ(kind_of([&] { external_score({random_image(4, 4, 1)}, stub_config(dir, std::nullopt)); }),
              ErrorKind::AdapterTimeout);
    unsetenv("GAUSSADV_ADAPTER_TIMEOUT_MS");
    EXPECT_EQ(stub_config(dir, std::nullopt).effective_timeout_ms(), 30000);
}

TEST(Adapter, MissingConfigurationRejected) {
    AdapterConfig c;
    EXPECT_EQ(kind_of([&] { external_score({}, c); }), ErrorKind::ConfigError);
}
