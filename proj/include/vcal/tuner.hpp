// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vcal/core.hpp"
#include "vcal/kernels.hpp"
#include "vcal/metrics.hpp"

namespace vcal::tuner {

using kernels::Objective;

enum class CalibrationMode {
  InvertSoftmax,      // softmax(inv_softmax(p) / tau)
  ResoftmaxBaseline,  // softmax(p / tau), the re-softmax pathology
};

struct SearchConfig {
  double tau_min = 0.05;
  double tau_max = 10.0;
  std::size_t grid_points = 400;
  /// Golden-section pass over the bracketing grid interval (NLL only).
  bool refine = true;
  std::size_t m_bins = metrics::kDefaultBins;
  /// Offset used when inverting softmax; any choice gives the same fit.
  OffsetRule offset = MeanOffset{};
};

struct TemperatureFit {
  double tau_star = 1.0;
  Objective objective = Objective::NLL;
  CalibrationMode mode = CalibrationMode::InvertSoftmax;
  double objective_value = 0.0;
  std::size_t m_bins = metrics::kDefaultBins;
  OffsetRule offset = MeanOffset{};
  std::vector<std::pair<double, double>> search_trace;  // (tau, objective)
};

/// Log-spaced candidate temperatures; tau = 1 is inserted when in range.
std::vector<double> search_grid(const SearchConfig& search);

/// Score matrix the objective is evaluated on: logit proxies for
/// InvertSoftmax, the probabilities themselves for the baseline.
kernels::ScoreMatrix prepare_scores(std::span<const metrics::LabeledPrediction> preds,
                                    CalibrationMode mode, const OffsetRule& offset = MeanOffset{});

/// Grid search for tau* on a validation split, with a golden-section
/// refinement when the objective is NLL. Grid ties go to the tau closest to 1.
/// Throws EmptyDataset or InvalidSearchRange.
TemperatureFit fit_temperature(std::span<const metrics::LabeledPrediction> val,
                               Objective objective = Objective::NLL,
                               CalibrationMode mode = CalibrationMode::InvertSoftmax,
                               const SearchConfig& search = {});

ProbVector apply_temperature(const ProbVector& p, double tau, CalibrationMode mode,
                             const OffsetRule& offset = MeanOffset{});
std::vector<ProbVector> apply_fit(std::span<const ProbVector> test, const TemperatureFit& fit);

std::string_view to_string(Objective objective) noexcept;
std::string_view to_string(CalibrationMode mode) noexcept;
Objective parse_objective(std::string_view s);
CalibrationMode parse_mode(std::string_view s);
/// "mean", or a number for a fixed offset.
OffsetRule parse_offset_rule(std::string_view s);
std::string offset_rule_to_string(const OffsetRule& rule);

std::string fit_to_json(const TemperatureFit& fit);
TemperatureFit fit_from_json(std::string_view text);

}  // namespace vcal::tuner
