// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcal/core.hpp"
#include "vcal/metrics.hpp"
#include "vcal/response_parser.hpp"

namespace vcal::dataset {

struct TaskSpec {
  std::string name;
  std::vector<std::string> labels;
  std::optional<std::string> positive_label;

  /// At least two labels, unique after canonicalization; positive label (if
  /// any) must be one of them. Throws InvalidConfig.
  void validate() const;
};

/// Built-in tasks: "imdb", "emotion", "massive". Throws InvalidConfig.
TaskSpec builtin_task(std::string_view name);
/// Generic task over the given labels (positive label = second label when K = 2).
TaskSpec custom_task(std::string name, std::vector<std::string> labels);

enum class Split { Validation, Test };
std::string_view to_string(Split split) noexcept;

struct PredictionRecord {
  std::string text;
  std::string gold_label;
  std::optional<RawResponse> raw_response;
  ParseOutcome parse;
  Split split = Split::Test;
  std::optional<ProbVector> calibrated;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Line-delimited JSON, one record per line:
///   {"text", "gold_label", "response_text", "model_id", "token_temperature", "split"}
/// `response_text` may be null or absent (status Empty). Output adds
/// "status", "parsed_distribution", "raw_sum" and "calibrated_distribution".
/// Blank lines are skipped. Errors carry the 1-based line number.
std::vector<PredictionRecord> read_records(std::istream& in, const TaskSpec& task);
std::vector<PredictionRecord> load_records(const std::filesystem::path& path, const TaskSpec& task);

std::string record_to_json_line(const PredictionRecord& record);
void write_records(std::ostream& out, std::span<const PredictionRecord> records);
void save_records(const std::filesystem::path& path, std::span<const PredictionRecord> records);

struct FilterResult {
  std::vector<PredictionRecord> kept;
  std::map<ParseStatus, std::size_t> dropped;

  std::size_t dropped_total() const noexcept;
};

/// Keeps Parsed records only.
FilterResult filter_parsed(std::span<const PredictionRecord> records);

struct IntersectionResult {
  std::map<std::string, std::vector<PredictionRecord>> per_model;
  /// Set when no text is parsed by every model (warning, not an error).
  bool empty = false;
};

/// Keeps, for each model, the Parsed records whose text is Parsed by every
/// model (first occurrence per text). Needs at least two models.
IntersectionResult intersect_by_text(
    const std::map<std::string, std::vector<PredictionRecord>>& per_model);

std::vector<PredictionRecord> select_split(std::span<const PredictionRecord> records, Split split);

enum class Source {
  Parsed,      // parsed distribution, normalized
  ParsedRaw,   // parsed distribution as verbalized
  Calibrated,  // calibrated distribution
};

/// Metric inputs from Parsed records. Throws InvalidConfig when a record
/// lacks the requested distribution.
std::vector<metrics::LabeledPrediction> predictions(std::span<const PredictionRecord> records,
                                                    Source source);
std::vector<double> raw_sums(std::span<const PredictionRecord> records);

}  // namespace vcal::dataset
