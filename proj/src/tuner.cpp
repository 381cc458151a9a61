// SPDX-License-Identifier: Apache-2.0
#include "vcal/tuner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>

#include "vcal/error.hpp"

namespace vcal::tuner {

namespace {

using nlohmann::json;

void validate_search(const SearchConfig& s) {
  const bool ok = std::isfinite(s.tau_min) && std::isfinite(s.tau_max) && s.tau_min > 0.0 &&
                  s.tau_max > s.tau_min && s.grid_points >= 2 && s.m_bins >= 1;
  if (!ok) {
    throw Error(ErrorCode::InvalidSearchRange,
                "need 0 < tau_min < tau_max, grid_points >= 2 and m_bins >= 1");
  }
}

// True when candidate a should replace incumbent b.
bool better(double value_a, double tau_a, double value_b, double tau_b) {
  if (value_a != value_b) return value_a < value_b;
  return std::abs(tau_a - 1.0) < std::abs(tau_b - 1.0);
}

struct Probe {
  double tau;
  double value;
};

// Golden-section search on [lo, hi]; every evaluation is appended to trace.
Probe golden_section(const kernels::ScoreMatrix& scores, double lo, double hi,
                     Objective objective, std::size_t m_bins,
                     std::vector<std::pair<double, double>>& trace) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto eval = [&](double tau) {
    const double v = kernels::objective_at(scores, tau, objective, m_bins);
    trace.emplace_back(tau, v);
    return v;
  };
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  for (int iter = 0; iter < 100 && (b - a) > 1e-9 * (1.0 + std::abs(a)); ++iter) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
  }
  return fc <= fd ? Probe{c, fc} : Probe{d, fd};
}

}  // namespace

std::vector<double> search_grid(const SearchConfig& search) {
  validate_search(search);
  const double log_lo = std::log(search.tau_min);
  const double log_hi = std::log(search.tau_max);
  std::vector<double> taus(search.grid_points);
  const auto last = static_cast<double>(search.grid_points - 1);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    taus[i] = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(i) / last);
  }
  taus.front() = search.tau_min;
  taus.back() = search.tau_max;
  if (search.tau_min <= 1.0 && 1.0 <= search.tau_max &&
      std::find(taus.begin(), taus.end(), 1.0) == taus.end()) {
    taus.insert(std::upper_bound(taus.begin(), taus.end(), 1.0), 1.0);
  }
  return taus;
}

kernels::ScoreMatrix prepare_scores(std::span<const metrics::LabeledPrediction> preds,
                                    CalibrationMode mode, const OffsetRule& offset) {
  auto scores = metrics::to_matrix(preds);
  for (std::size_t i = 0; i < scores.rows; ++i) {
    validate_distribution(preds[i].distribution);
    if (mode == CalibrationMode::InvertSoftmax) {
      auto row = std::span<double>(scores.values).subspan(i * scores.cols, scores.cols);
      invert_softmax_into(preds[i].distribution.values, offset, row);
    }
  }
  return scores;
}

TemperatureFit fit_temperature(std::span<const metrics::LabeledPrediction> val,
                               Objective objective, CalibrationMode mode,
                               const SearchConfig& search) {
  if (val.empty()) throw Error(ErrorCode::EmptyDataset, "validation split is empty");
  const auto taus = search_grid(search);
  const auto scores = prepare_scores(val, mode, search.offset);
  const auto values = kernels::objective_grid_parallel(scores, taus, objective, search.m_bins);

  TemperatureFit fit;
  fit.objective = objective;
  fit.mode = mode;
  fit.m_bins = search.m_bins;
  fit.offset = search.offset;
  fit.search_trace.reserve(taus.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    fit.search_trace.emplace_back(taus[i], values[i]);
    if (better(values[i], taus[i], values[best], taus[best])) best = i;
  }
  fit.tau_star = taus[best];
  fit.objective_value = values[best];

  if (objective == Objective::NLL && search.refine) {
    const double lo = taus[best == 0 ? 0 : best - 1];
    const double hi = taus[std::min(best + 1, taus.size() - 1)];
    const Probe refined = golden_section(scores, lo, hi, objective, search.m_bins, fit.search_trace);
    if (refined.value < fit.objective_value) {
      fit.tau_star = refined.tau;
      fit.objective_value = refined.value;
    }
  }
  return fit;
}

ProbVector apply_temperature(const ProbVector& p, double tau, CalibrationMode mode,
                             const OffsetRule& offset) {
  const TemperatureParam t(tau);
  if (mode == CalibrationMode::InvertSoftmax) return calibrate_verbalized(p, t, offset);
  validate_distribution(p);
  return temperature_scale(LogitVector{p.labels, p.values, 0.0}, t);
}

std::vector<ProbVector> apply_fit(std::span<const ProbVector> test, const TemperatureFit& fit) {
  std::vector<ProbVector> out;
  out.reserve(test.size());
  for (const auto& p : test) out.push_back(apply_temperature(p, fit.tau_star, fit.mode, fit.offset));
  return out;
}

std::string_view to_string(Objective objective) noexcept {
  return objective == Objective::NLL ? "nll" : "ece";
}

std::string_view to_string(CalibrationMode mode) noexcept {
  return mode == CalibrationMode::InvertSoftmax ? "invert-softmax" : "resoftmax-baseline";
}

Objective parse_objective(std::string_view s) {
  if (s == "nll") return Objective::NLL;
  if (s == "ece") return Objective::ECE;
  throw Error(ErrorCode::InvalidConfig, "unknown objective '" + std::string(s) + "'");
}

CalibrationMode parse_mode(std::string_view s) {
  if (s == "invert-softmax") return CalibrationMode::InvertSoftmax;
  if (s == "resoftmax-baseline") return CalibrationMode::ResoftmaxBaseline;
  throw Error(ErrorCode::InvalidConfig, "unknown calibration mode '" + std::string(s) + "'");
}

OffsetRule parse_offset_rule(std::string_view s) {
  if (s == "mean") return MeanOffset{};
  double c = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), c);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(c)) {
    throw Error(ErrorCode::InvalidConfig, "offset rule must be 'mean' or a number, got '" +
                                              std::string(s) + "'");
  }
  return FixedOffset{c};
}

std::string offset_rule_to_string(const OffsetRule& rule) {
  if (std::holds_alternative<MeanOffset>(rule)) return "mean";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), std::get<FixedOffset>(rule).c);
  return std::string(buf, end);
}

std::string fit_to_json(const TemperatureFit& fit) {
  json trace = json::array();
  for (const auto& [tau, value] : fit.search_trace) trace.push_back({tau, value});
  const json j = {{"tau_star", fit.tau_star},
                  {"objective", to_string(fit.objective)},
                  {"mode", to_string(fit.mode)},
                  {"objective_value", fit.objective_value},
                  {"m_bins", fit.m_bins},
                  {"offset_rule", offset_rule_to_string(fit.offset)},
                  {"search_trace", trace}};
  return j.dump(2);
}

TemperatureFit fit_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    TemperatureFit fit;
    fit.tau_star = j.at("tau_star").get<double>();
    TemperatureParam{fit.tau_star};
    fit.objective = parse_objective(j.at("objective").get<std::string>());
    fit.mode = parse_mode(j.at("mode").get<std::string>());
    fit.objective_value = j.at("objective_value").get<double>();
    fit.m_bins = j.value("m_bins", metrics::kDefaultBins);
    fit.offset = parse_offset_rule(j.value("offset_rule", std::string("mean")));
    for (const auto& pt : j.value("search_trace", json::array())) {
      fit.search_trace.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
    }
    return fit;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("temperature fit JSON: ") + e.what());
  }
}

}  // namespace vcal::tuner
