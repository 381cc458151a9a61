// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcal/core.hpp"

namespace vcal {

/// Verbatim model output plus the generation settings that produced it.
struct RawResponse {
  std::string text;
  std::string model_id;
  double token_temperature = 0.0;

  friend bool operator==(const RawResponse&, const RawResponse&) = default;
};

enum class ParseStatus { Parsed, Refused, Malformed, UnknownLabels, Empty };

std::string_view to_string(ParseStatus status) noexcept;
ParseStatus parse_status(std::string_view s);

struct ParseOutcome {
  ParseStatus status = ParseStatus::Empty;
  /// Raw values in expected-label order; present iff status == Parsed.
  std::optional<ProbVector> distribution;
  std::optional<double> raw_sum;

  friend bool operator==(const ParseOutcome&, const ParseOutcome&) = default;
};

/// Lowercase, trim, and collapse internal whitespace runs to one underscore.
std::string canonicalize_label(std::string_view s);

/// Extracts the last brace-delimited `key: number` map from free text.
/// Missing expected labels are imputed as 0; keys outside the expected set
/// give UnknownLabels. No normalization happens here. Throws InvalidConfig
/// only when `expected_labels` is empty or not unique after canonicalization.
ParseOutcome parse_response(std::string_view text, std::span<const std::string> expected_labels);
ParseOutcome parse_response(const RawResponse& resp, std::span<const std::string> expected_labels);

}  // namespace vcal
