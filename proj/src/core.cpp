// SPDX-License-Identifier: Apache-2.0
#include "vcal/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vcal/error.hpp"

namespace vcal {

namespace {

void require_two_labels(std::size_t labels, std::size_t values) {
  if (labels != values) {
    throw Error(ErrorCode::LabelMismatch, "label count " + std::to_string(labels) +
                                              " != value count " + std::to_string(values));
  }
  if (values < 2) {
    throw Error(ErrorCode::EmptyDistribution, "need at least two classes, got " +
                                                  std::to_string(values));
  }
}

void require_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite value in input");
  }
}

}  // namespace

double ProbVector::sum() const noexcept {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

ProbVector ProbVector::normalized() const {
  validate_distribution(*this);
  const double s = sum();
  ProbVector out{labels, values};
  for (double& v : out.values) v /= s;
  return out;
}

TemperatureParam::TemperatureParam(double tau) : tau_(tau) {
  if (!std::isfinite(tau) || tau <= 0.0) {
    throw Error(ErrorCode::InvalidTemperature,
                "temperature must be positive and finite, got " + std::to_string(tau));
  }
}

void softmax_into(std::span<const double> logits, double tau, std::span<double> out) noexcept {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] / tau;
    top = std::max(top, out[i]);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
}

void invert_softmax_into(std::span<const double> probs, const OffsetRule& rule,
                         std::span<double> out) noexcept {
  double log_sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = std::log(probs[i] + kLogEpsilon);
    log_sum += out[i];
  }
  const double c = std::holds_alternative<MeanOffset>(rule)
                       ? -log_sum / static_cast<double>(probs.size())
                       : std::get<FixedOffset>(rule).c;
  for (double& v : out) v += c;
}

std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double entropy(std::span<const double> probs) noexcept {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void validate_distribution(const ProbVector& p) {
  require_two_labels(p.labels.size(), p.values.size());
  require_finite(p.values);
  bool any_positive = false;
  for (double v : p.values) {
    if (v < 0.0) throw Error(ErrorCode::InvalidProbability, "negative probability");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw Error(ErrorCode::AllZero, "every probability is zero");
}

ProbVector softmax(const LogitVector& z) {
  require_two_labels(z.labels.size(), z.values.size());
  require_finite(z.values);
  ProbVector out{z.labels, std::vector<double>(z.size())};
  softmax_into(z.values, 1.0, out.values);
  return out;
}

LogitVector invert_softmax(const ProbVector& p, const OffsetRule& rule) {
  validate_distribution(p);
  LogitVector out{p.labels, std::vector<double>(p.size()), 0.0};
  invert_softmax_into(p.values, rule, out.values);
  if (const auto* fixed = std::get_if<FixedOffset>(&rule)) {
    out.offset_c = fixed->c;
  } else {
    double log_sum = 0.0;
    for (double v : p.values) log_sum += std::log(v + kLogEpsilon);
    out.offset_c = -log_sum / static_cast<double>(p.size());
  }
  return out;
}

ProbVector resoftmax(const ProbVector& p) {
  require_two_labels(p.labels.size(), p.values.size());
  return softmax(LogitVector{p.labels, p.values, 0.0});
}

ProbVector temperature_scale(const LogitVector& z, TemperatureParam tau) {
  require_two_labels(z.labels.size(), z.values.size());
  require_finite(z.values);
  ProbVector out{z.labels, std::vector<double>(z.size())};
  softmax_into(z.values, tau.value(), out.values);
  return out;
}

ProbVector calibrate_verbalized(const ProbVector& p_raw, TemperatureParam tau,
                                const OffsetRule& rule) {
  return temperature_scale(invert_softmax(p_raw, rule), tau);
}

}  // namespace vcal
