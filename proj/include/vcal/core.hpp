// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Numeric kernels for calibrating verbalized probability distributions.
 *
 * A verbalized distribution p is mapped back to logit proxies
 * z_i = log(p_i + eps) + c, then temperature scaled: softmax(z / tau).
 * The additive constant c cancels inside softmax, so any offset rule gives
 * the same calibrated output. `resoftmax` (softmax applied directly to
 * probabilities) is kept for baseline experiments; its outputs are squeezed
 * into [1/(K-1+e), e/(K-1+e)].
 *
 * Every function here is pure and safe to call concurrently.
 */

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace vcal {

/// Offset added before taking logs so that zero probabilities stay finite.
inline constexpr double kLogEpsilon = 1e-9;

/// Distribution over K named labels. Values may be raw (any positive sum)
/// or normalized; `normalized()` produces the latter.
struct ProbVector {
  std::vector<std::string> labels;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double sum() const noexcept;
  ProbVector normalized() const;

  friend bool operator==(const ProbVector&, const ProbVector&) = default;
};

/// Logit proxies for a ProbVector, with the offset c that was applied.
struct LogitVector {
  std::vector<std::string> labels;
  std::vector<double> values;
  double offset_c = 0.0;

  std::size_t size() const noexcept { return values.size(); }
};

/// Strictly positive, finite label temperature.
class TemperatureParam {
 public:
  explicit TemperatureParam(double tau);
  double value() const noexcept { return tau_; }

 private:
  double tau_;
};

struct MeanOffset {};
struct FixedOffset {
  double c = 0.0;
};
/// How invert_softmax picks c. MeanOffset centres the logits at zero.
using OffsetRule = std::variant<MeanOffset, FixedOffset>;

// Span-level primitives shared with the batch kernels. `out` must have the
// same length as the input.
/// softmax(logits / tau) with max-subtraction.
void softmax_into(std::span<const double> logits, double tau, std::span<double> out) noexcept;
void invert_softmax_into(std::span<const double> probs, const OffsetRule& rule,
                         std::span<double> out) noexcept;
/// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values) noexcept;
/// Shannon entropy in nats of a normalized distribution (0 log 0 = 0).
double entropy(std::span<const double> probs) noexcept;

ProbVector softmax(const LogitVector& z);
LogitVector invert_softmax(const ProbVector& p, const OffsetRule& rule = MeanOffset{});
/// softmax(p) with p treated as logits. The pathology baseline.
ProbVector resoftmax(const ProbVector& p);
ProbVector temperature_scale(const LogitVector& z, TemperatureParam tau);
/// temperature_scale(invert_softmax(p_raw, rule), tau). Renormalizes inputs
/// that do not sum to one.
ProbVector calibrate_verbalized(const ProbVector& p_raw, TemperatureParam tau,
                                const OffsetRule& rule = MeanOffset{});

/// Validates a distribution over at least two labels with non-negative,
/// finite values and at least one positive entry. Throws vcal::Error.
void validate_distribution(const ProbVector& p);

}  // namespace vcal
