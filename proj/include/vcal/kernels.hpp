// SPDX-License-Identifier: Apache-2.0
#pragma once

// Batch kernels over row-major N x K score matrices. Each data-parallel
// kernel has a `_serial` reference and a `_parallel` OpenMP variant; the two
// return bit-identical results because every floating-point reduction is
// performed serially in row order after the parallel per-row phase.

#include <cstddef>
#include <span>
#include <vector>

namespace vcal::kernels {

enum class Objective { NLL, ECE };

/// Probability floor applied before taking -log p(gold).
inline constexpr double kNllFloor = 1e-12;

struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;     // rows * cols
  std::vector<std::size_t> gold;  // rows

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols, cols);
  }
};

struct BinTotals {
  std::vector<std::size_t> count;
  std::vector<std::size_t> correct;
  std::vector<double> confidence_sum;
};

struct CalibrationGap {
  double ece = 0.0;
  double mce = 0.0;
};

/// Lower edge of bin `m` out of `m_bins` equal-width bins on [0, 1].
double bin_edge(std::size_t m, std::size_t m_bins) noexcept;
/// Bin for a confidence value: [lo, hi) except the last bin, which is closed.
std::size_t bin_index(double confidence, std::size_t m_bins) noexcept;

BinTotals accumulate_bins(std::span<const double> probs, std::size_t cols,
                          std::span<const std::size_t> gold, std::size_t m_bins);
CalibrationGap calibration_gap(const BinTotals& bins, std::size_t n) noexcept;

/// softmax(row / tau) for every row.
void scale_rows_serial(const ScoreMatrix& scores, double tau, std::span<double> out);
void scale_rows_parallel(const ScoreMatrix& scores, double tau, std::span<double> out);

double mean_nll_serial(std::span<const double> probs, std::size_t cols,
                       std::span<const std::size_t> gold);
double mean_nll_parallel(std::span<const double> probs, std::size_t cols,
                         std::span<const std::size_t> gold);

/// Objective of softmax(scores / tau) against the gold labels.
double objective_at(const ScoreMatrix& scores, double tau, Objective objective,
                    std::size_t m_bins);

/// objective_at for every tau in `taus`.
std::vector<double> objective_grid_serial(const ScoreMatrix& scores, std::span<const double> taus,
                                          Objective objective, std::size_t m_bins);
std::vector<double> objective_grid_parallel(const ScoreMatrix& scores,
                                            std::span<const double> taus, Objective objective,
                                            std::size_t m_bins);

}  // namespace vcal::kernels
