// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gaussadv {

enum class ErrorKind {
    InvalidParameter,
    MissingField,
    NonFiniteValue,
    UnsupportedFormat,
    IoFailure,
    UnknownShape,
    DegenerateCovariance,
    TooFewGaussians,
    UnpairedGaussian,
    NonFiniteLoss,
    DetectorFailure,
    ShapeMismatch,
    DimensionMismatch,
    AdapterTimeout,
    MalformedResponse,
    NonFiniteConfidence,
    ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` carries the error class so
/// callers (the CLI in particular) can map it to an exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), mKind(kind) {}

    ErrorKind kind() const noexcept { return mKind; }

private:
    ErrorKind mKind;
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::UnknownShape: return "UnknownShape";
    case ErrorKind::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorKind::TooFewGaussians: return "TooFewGaussians";
    case ErrorKind::UnpairedGaussian: return "UnpairedGaussian";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::DetectorFailure: return "DetectorFailure";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::AdapterTimeout: return "AdapterTimeout";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::NonFiniteConfidence: return "NonFiniteConfidence";
    case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

} // namespace gaussadv
