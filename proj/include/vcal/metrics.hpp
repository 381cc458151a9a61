// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcal/core.hpp"
#include "vcal/kernels.hpp"

namespace vcal::metrics {

inline constexpr std::size_t kDefaultBins = 10;
inline constexpr double kDefaultSumTolerance = 1e-6;

struct LabeledPrediction {
  ProbVector distribution;
  std::string gold_label;
};

struct BinStats {
  std::size_t bin_index = 0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;

  friend bool operator==(const BinStats&, const BinStats&) = default;
};

struct EceResult {
  double ece = 0.0;
  std::vector<BinStats> bins;
};

struct SumStats {
  double mean = 0.0;
  double variance = 0.0;
};

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t m_bins = kDefaultBins;
  double accuracy = 0.0;
  double avg_confidence = 0.0;
  double nll = 0.0;
  double ece = 0.0;
  double mce = 0.0;
  double success_rate = 0.0;
  double sum_mean = 0.0;
  double sum_variance = 0.0;
  std::vector<BinStats> bins;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Flattens predictions into a score matrix with gold indices. All
/// predictions must share one label order (LabelMismatch otherwise) and every
/// gold label must belong to it. Throws EmptyDataset on an empty list.
kernels::ScoreMatrix to_matrix(std::span<const LabeledPrediction> preds);

double accuracy(std::span<const LabeledPrediction> preds);
double nll(std::span<const LabeledPrediction> preds);
EceResult ece(std::span<const LabeledPrediction> preds, std::size_t m_bins = kDefaultBins);
double mce(std::span<const LabeledPrediction> preds, std::size_t m_bins = kDefaultBins);
double mean_confidence(std::span<const LabeledPrediction> preds);

/// Fraction of raw sums within `tol` of one.
double success_rate(std::span<const double> raw_sums, double tol = kDefaultSumTolerance);
/// Population mean and variance of the raw sums.
SumStats sum_stats(std::span<const double> raw_sums);

/// One point per distinct score of `positive_label`, thresholds descending.
/// A record is predicted positive when its score is >= the threshold. Scores
/// are read as given (no normalization). Precision is 1 when nothing is
/// predicted positive; recall is 1 when the set holds no positives.
std::vector<PRPoint> pr_curve(std::span<const LabeledPrediction> preds,
                              std::string_view positive_label);

/// Every metric above in one pass. `raw_sums` feeds the success-rate and sum
/// statistics; when absent the distribution sums are used.
EvalReport reliability_report(std::span<const LabeledPrediction> preds,
                              std::size_t m_bins = kDefaultBins,
                              std::optional<std::span<const double>> raw_sums = std::nullopt);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
/// Header row, one `bin` row per bin, then one `summary` row.
std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(std::string_view text);

}  // namespace vcal::metrics
