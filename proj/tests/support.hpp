// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small seeded generators shared by the property tests and the acceptance
// binary. Everything is driven by an explicit std::mt19937_64.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "vcal/core.hpp"
#include "vcal/metrics.hpp"

namespace vcal::testing {

inline std::vector<std::string> make_labels(std::size_t k) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < k; ++i) labels.push_back("c" + std::to_string(i));
  return labels;
}

/// Normalized distribution; Dirichlet(alpha) via gamma draws, with every
/// component at least `floor` before normalization.
inline ProbVector random_distribution(std::mt19937_64& rng, std::size_t k, double alpha = 1.0,
                                      double floor = 0.0) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  ProbVector p{make_labels(k), std::vector<double>(k)};
  double sum = 0.0;
  for (auto& v : p.values) {
    v = gamma(rng) + floor;
    sum += v;
  }
  if (sum == 0.0) {
    p.values[0] = 1.0;
    sum = 1.0;
  }
  for (auto& v : p.values) v /= sum;
  return p;
}

/// Distribution whose values are multiples of 10^-decimals, as a model would
/// verbalize them. At least one entry is positive; the sum may drift from 1.
inline ProbVector rounded_distribution(std::mt19937_64& rng, std::size_t k, int decimals) {
  const double scale = decimals == 1 ? 10.0 : 100.0;
  auto p = random_distribution(rng, k, 0.7);
  bool any = false;
  for (auto& v : p.values) {
    v = std::round(v * scale) / scale;
    any = any || v > 0.0;
  }
  if (!any) p.values[0] = 1.0 / scale;
  return p;
}

inline std::vector<metrics::LabeledPrediction> random_predictions(std::mt19937_64& rng,
                                                                  std::size_t n, std::size_t k,
                                                                  double alpha = 1.0) {
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  std::vector<metrics::LabeledPrediction> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = random_distribution(rng, k, alpha);
    const auto gold = p.labels[pick(rng)];
    out.push_back({std::move(p), gold});
  }
  return out;
}

}  // namespace vcal::testing
