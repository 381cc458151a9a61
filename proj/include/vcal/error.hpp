// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vcal {

enum class ErrorCode {
  NonFiniteInput,
  InvalidProbability,
  EmptyDistribution,
  AllZero,
  InvalidTemperature,
  EmptyDataset,
  LabelMismatch,
  UnknownLabel,
  InvalidSearchRange,
  IoError,
  SchemaError,
  UnknownGoldLabel,
  EmptyIntersection,
  MissingPlaceholder,
  TransportError,
  AuthError,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. Loader errors also carry the
/// 1-based line number of the offending input line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

}  // namespace vcal
