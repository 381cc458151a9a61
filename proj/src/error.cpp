// SPDX-License-Identifier: Apache-2.0
#include "vcal/error.hpp"

namespace vcal {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::EmptyDistribution: return "EmptyDistribution";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::InvalidTemperature: return "InvalidTemperature";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::InvalidSearchRange: return "InvalidSearchRange";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnknownGoldLabel: return "UnknownGoldLabel";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> line) {
  std::string out(to_string(code));
  if (line) out += " (line " + std::to_string(*line) + ")";
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> line)
    : std::runtime_error(decorate(code, message, line)), code_(code), line_(line) {}

}  // namespace vcal
