// SPDX-License-Identifier: Apache-2.0
#include "vcal/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "vcal/core.hpp"

namespace vcal::kernels {

namespace {

double gold_nll(std::span<const double> row, std::size_t gold) noexcept {
  return -std::log(std::max(row[gold], kNllFloor));
}

double evaluate(std::span<const double> probs, std::size_t cols,
                std::span<const std::size_t> gold, Objective objective, std::size_t m_bins) {
  if (objective == Objective::NLL) return mean_nll_serial(probs, cols, gold);
  return calibration_gap(accumulate_bins(probs, cols, gold, m_bins), gold.size()).ece;
}

}  // namespace

double bin_edge(std::size_t m, std::size_t m_bins) noexcept {
  return static_cast<double>(m) / static_cast<double>(m_bins);
}

std::size_t bin_index(double confidence, std::size_t m_bins) noexcept {
  if (!(confidence > 0.0)) return 0;
  if (confidence >= 1.0) return m_bins - 1;
  auto idx = static_cast<std::size_t>(confidence * static_cast<double>(m_bins));
  idx = std::min(idx, m_bins - 1);
  // floor(conf * M) can land one bin off near an edge; the edges are the truth.
  while (idx > 0 && confidence < bin_edge(idx, m_bins)) --idx;
  while (idx + 1 < m_bins && confidence >= bin_edge(idx + 1, m_bins)) ++idx;
  return idx;
}

BinTotals accumulate_bins(std::span<const double> probs, std::size_t cols,
                          std::span<const std::size_t> gold, std::size_t m_bins) {
  BinTotals bins{std::vector<std::size_t>(m_bins, 0), std::vector<std::size_t>(m_bins, 0),
                 std::vector<double>(m_bins, 0.0)};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto row = probs.subspan(i * cols, cols);
    const std::size_t pred = argmax(row);
    const double conf = row[pred];
    const std::size_t b = bin_index(conf, m_bins);
    bins.count[b] += 1;
    bins.correct[b] += pred == gold[i] ? 1 : 0;
    bins.confidence_sum[b] += conf;
  }
  return bins;
}

CalibrationGap calibration_gap(const BinTotals& bins, std::size_t n) noexcept {
  CalibrationGap gap;
  for (std::size_t m = 0; m < bins.count.size(); ++m) {
    if (bins.count[m] == 0) continue;
    const auto count = static_cast<double>(bins.count[m]);
    const double acc = static_cast<double>(bins.correct[m]) / count;
    const double conf = bins.confidence_sum[m] / count;
    const double diff = std::abs(acc - conf);
    gap.ece += (count / static_cast<double>(n)) * diff;
    gap.mce = std::max(gap.mce, diff);
  }
  return gap;
}

void scale_rows_serial(const ScoreMatrix& scores, double tau, std::span<double> out) {
  for (std::size_t i = 0; i < scores.rows; ++i) {
    softmax_into(scores.row(i), tau, out.subspan(i * scores.cols, scores.cols));
  }
}

void scale_rows_parallel(const ScoreMatrix& scores, double tau, std::span<double> out) {
  const auto rows = static_cast<std::int64_t>(scores.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    softmax_into(scores.row(r), tau, out.subspan(r * scores.cols, scores.cols));
  }
}

double mean_nll_serial(std::span<const double> probs, std::size_t cols,
                       std::span<const std::size_t> gold) {
  double total = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    total += gold_nll(probs.subspan(i * cols, cols), gold[i]);
  }
  return total / static_cast<double>(gold.size());
}

double mean_nll_parallel(std::span<const double> probs, std::size_t cols,
                         std::span<const std::size_t> gold) {
  std::vector<double> terms(gold.size());
  const auto rows = static_cast<std::int64_t>(gold.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    terms[r] = gold_nll(probs.subspan(r * cols, cols), gold[r]);
  }
  double total = 0.0;
  for (double t : terms) total += t;
  return total / static_cast<double>(gold.size());
}

double objective_at(const ScoreMatrix& scores, double tau, Objective objective,
                    std::size_t m_bins) {
  std::vector<double> probs(scores.values.size());
  scale_rows_serial(scores, tau, probs);
  return evaluate(probs, scores.cols, scores.gold, objective, m_bins);
}

std::vector<double> objective_grid_serial(const ScoreMatrix& scores, std::span<const double> taus,
                                          Objective objective, std::size_t m_bins) {
  std::vector<double> out(taus.size());
  for (std::size_t t = 0; t < taus.size(); ++t) {
    out[t] = objective_at(scores, taus[t], objective, m_bins);
  }
  return out;
}

std::vector<double> objective_grid_parallel(const ScoreMatrix& scores,
                                            std::span<const double> taus, Objective objective,
                                            std::size_t m_bins) {
  std::vector<double> out(taus.size());
  const auto n = static_cast<std::int64_t>(taus.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t t = 0; t < n; ++t) {
    const auto k = static_cast<std::size_t>(t);
    out[k] = objective_at(scores, taus[k], objective, m_bins);
  }
  return out;
}

}  // namespace vcal::kernels
