// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
// Victim models. Differentiable victims expose an input gradient and can
// drive an attack; external scorers are black boxes used for evaluation only
// and deliberately share no base class with them.
#pragma once

#include "gaussadv/image.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gaussadv {

struct ConfidenceScore {
    double value = 0.0;
    std::optional<std::string> label;
};

class DifferentiableDetector {
public:
    virtual ~DifferentiableDetector() = default;
    virtual double confidence(const RgbImage &rgb) const = 0;
    /// Confidence and its gradient with respect to every input pixel.
    virtual double confidence_with_grad(const RgbImage &rgb, RgbImage &grad) const = 0;
};

/// Fixed, seeded stand-in detector: area resample to input_size², valid
/// convolution with a kernel bank, ReLU(z − threshold), global average pool,
/// affine readout, logistic squash.
struct ToyDetectorSpec {
    std::uint64_t seed = 2024;
    int kernels = 16;
    int kernel_size = 5;
    int input_size = 64;
    double gain = 500.0;
    double bias = 0.0;
    /// Activation offset subtracted before the rectifier.
    double threshold = 0.05;
    double calibration_target = 0.8;
    /// kernels × 3 channels, each kernel_size² row-major.
    std::vector<std::vector<double>> weights;
    std::vector<double> readout;

    void validate() const;
};

/// Draws kernel and readout weights from the seed; bias is left at 0.
ToyDetectorSpec make_toy_spec(std::uint64_t seed = 2024, int kernels = 16, int kernel_size = 5, int input_size = 64,
                              double gain = 500.0, double threshold = 0.05);

std::string toy_spec_to_json(const ToyDetectorSpec &spec);
ToyDetectorSpec toy_spec_from_json(const std::string &text);
void save_toy_spec(const ToyDetectorSpec &spec, const std::string &path);
ToyDetectorSpec load_toy_spec(const std::string &path);

class ToyDetector final : public DifferentiableDetector {
public:
    explicit ToyDetector(ToyDetectorSpec spec);

    double confidence(const RgbImage &rgb) const override;
    double confidence_with_grad(const RgbImage &rgb, RgbImage &grad) const override;

    double logit(const RgbImage &rgb) const;
    /// Pooled activations, one per kernel.
    std::vector<double> features(const RgbImage &rgb) const;

    /// Upper bound on |Δconfidence| per unit change of one input pixel channel
    /// for an image of the given resolution.
    double lipschitz_bound(int height, int width) const;

    const ToyDetectorSpec &spec() const { return mSpec; }

private:
    ToyDetectorSpec mSpec;
};

/// Sets spec.bias by bisection so that `reference` scores the calibration
/// target (rounded up, so the result is never below it).
ToyDetectorSpec calibrate_toy(ToyDetectorSpec spec, const RgbImage &reference);

/// Area-weighted resampling operator from `in` samples to `out` samples.
Eigen::MatrixXd area_resample_matrix(int out, int in);

struct AdapterConfig {
    std::string executable;
    std::string exchange_dir;
    /// Falls back to $GAUSSADV_ADAPTER_TIMEOUT_MS, then 30000.
    std::optional<int> timeout_ms;

    int effective_timeout_ms() const;
};

/// Black-box scoring: writes view_%04d.png and manifest.json into the exchange
/// directory, runs `<executable> <exchange_dir>` once and reads scores.jsonl.
std::vector<ConfidenceScore> external_score(const std::vector<RgbImage> &views, const AdapterConfig &config);

/// Parses a scores.jsonl payload for `count` images.
std::vector<ConfidenceScore> parse_scores(const std::string &jsonl, std::size_t count);

} // namespace gaussadv
