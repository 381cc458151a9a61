// SPDX-License-Identifier: Apache-2.0
#include "vcal/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "vcal/error.hpp"

namespace vcal::metrics {

namespace {

using nlohmann::json;

void require_non_empty(std::size_t n, std::string_view what) {
  if (n == 0) throw Error(ErrorCode::EmptyDataset, std::string(what) + ": no records");
}

std::vector<BinStats> describe_bins(const kernels::BinTotals& totals) {
  const std::size_t m_bins = totals.count.size();
  std::vector<BinStats> out(m_bins);
  for (std::size_t m = 0; m < m_bins; ++m) {
    BinStats& b = out[m];
    b.bin_index = m;
    b.lower = kernels::bin_edge(m, m_bins);
    b.upper = kernels::bin_edge(m + 1, m_bins);
    b.count = totals.count[m];
    if (b.count > 0) {
      const auto count = static_cast<double>(b.count);
      b.accuracy = static_cast<double>(totals.correct[m]) / count;
      b.confidence = totals.confidence_sum[m] / count;
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::SchemaError, "bad number in report: '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::SchemaError, "bad integer in report: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

constexpr std::string_view kCsvHeader =
    "kind,bin_index,lower,upper,count,accuracy,confidence,nll,ece,mce,success_rate,sum_mean,"
    "sum_variance";

}  // namespace

kernels::ScoreMatrix to_matrix(std::span<const LabeledPrediction> preds) {
  require_non_empty(preds.size(), "metrics");
  const auto& labels = preds.front().distribution.labels;
  kernels::ScoreMatrix m;
  m.rows = preds.size();
  m.cols = labels.size();
  m.values.reserve(m.rows * m.cols);
  m.gold.reserve(m.rows);
  for (const auto& p : preds) {
    if (p.distribution.labels != labels || p.distribution.values.size() != m.cols) {
      throw Error(ErrorCode::LabelMismatch, "predictions do not share one label set");
    }
    const auto it = std::find(labels.begin(), labels.end(), p.gold_label);
    if (it == labels.end()) {
      throw Error(ErrorCode::LabelMismatch, "gold label '" + p.gold_label + "' not in label set");
    }
    m.values.insert(m.values.end(), p.distribution.values.begin(), p.distribution.values.end());
    m.gold.push_back(static_cast<std::size_t>(it - labels.begin()));
  }
  return m;
}

double accuracy(std::span<const LabeledPrediction> preds) {
  const auto m = to_matrix(preds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m.rows; ++i) hits += argmax(m.row(i)) == m.gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(m.rows);
}

double nll(std::span<const LabeledPrediction> preds) {
  const auto m = to_matrix(preds);
  return kernels::mean_nll_serial(m.values, m.cols, m.gold);
}

EceResult ece(std::span<const LabeledPrediction> preds, std::size_t m_bins) {
  if (m_bins == 0) throw Error(ErrorCode::InvalidConfig, "m_bins must be >= 1");
  const auto m = to_matrix(preds);
  const auto totals = kernels::accumulate_bins(m.values, m.cols, m.gold, m_bins);
  return {kernels::calibration_gap(totals, m.rows).ece, describe_bins(totals)};
}

double mce(std::span<const LabeledPrediction> preds, std::size_t m_bins) {
  if (m_bins == 0) throw Error(ErrorCode::InvalidConfig, "m_bins must be >= 1");
  const auto m = to_matrix(preds);
  return kernels::calibration_gap(kernels::accumulate_bins(m.values, m.cols, m.gold, m_bins),
                                  m.rows)
      .mce;
}

double mean_confidence(std::span<const LabeledPrediction> preds) {
  const auto m = to_matrix(preds);
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto row = m.row(i);
    total += row[argmax(row)];
  }
  return total / static_cast<double>(m.rows);
}

double success_rate(std::span<const double> raw_sums, double tol) {
  require_non_empty(raw_sums.size(), "success_rate");
  const auto ok = std::count_if(raw_sums.begin(), raw_sums.end(),
                                [tol](double s) { return std::abs(s - 1.0) <= tol; });
  return static_cast<double>(ok) / static_cast<double>(raw_sums.size());
}

SumStats sum_stats(std::span<const double> raw_sums) {
  require_non_empty(raw_sums.size(), "sum_stats");
  const auto n = static_cast<double>(raw_sums.size());
  double mean = 0.0;
  for (double s : raw_sums) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : raw_sums) var += (s - mean) * (s - mean);
  return {mean, var / n};
}

std::vector<PRPoint> pr_curve(std::span<const LabeledPrediction> preds,
                              std::string_view positive_label) {
  require_non_empty(preds.size(), "pr_curve");
  const auto& labels = preds.front().distribution.labels;
  const auto it = std::find(labels.begin(), labels.end(), positive_label);
  if (it == labels.end()) {
    throw Error(ErrorCode::UnknownLabel,
                "positive label '" + std::string(positive_label) + "' not in label set");
  }
  const auto pos_index = static_cast<std::size_t>(it - labels.begin());
  const auto m = to_matrix(preds);

  std::vector<std::pair<double, bool>> scored(m.rows);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const bool is_pos = m.gold[i] == pos_index;
    scored[i] = {m.row(i)[pos_index], is_pos};
    positives += is_pos ? 1 : 0;
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<PRPoint> curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < scored.size();) {
    const double threshold = scored[i].first;
    for (; i < scored.size() && scored[i].first == threshold; ++i) {
      (scored[i].second ? tp : fp) += 1;
    }
    PRPoint pt;
    pt.threshold = threshold;
    pt.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    pt.recall = positives == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(positives);
    curve.push_back(pt);
  }
  return curve;
}

EvalReport reliability_report(std::span<const LabeledPrediction> preds, std::size_t m_bins,
                              std::optional<std::span<const double>> raw_sums) {
  if (m_bins == 0) throw Error(ErrorCode::InvalidConfig, "m_bins must be >= 1");
  const auto m = to_matrix(preds);

  EvalReport r;
  r.n = m.rows;
  r.m_bins = m_bins;
  std::size_t hits = 0;
  double conf_total = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto row = m.row(i);
    const std::size_t pred = argmax(row);
    hits += pred == m.gold[i] ? 1 : 0;
    conf_total += row[pred];
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(m.rows);
  r.avg_confidence = conf_total / static_cast<double>(m.rows);
  r.nll = kernels::mean_nll_serial(m.values, m.cols, m.gold);
  const auto totals = kernels::accumulate_bins(m.values, m.cols, m.gold, m_bins);
  const auto gap = kernels::calibration_gap(totals, m.rows);
  r.ece = gap.ece;
  r.mce = gap.mce;
  r.bins = describe_bins(totals);

  std::vector<double> own_sums;
  if (!raw_sums) {
    own_sums.reserve(preds.size());
    for (const auto& p : preds) own_sums.push_back(p.distribution.sum());
    raw_sums = std::span<const double>(own_sums);
  }
  r.success_rate = success_rate(*raw_sums);
  const auto stats = sum_stats(*raw_sums);
  r.sum_mean = stats.mean;
  r.sum_variance = stats.variance;
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"bin_index", b.bin_index},
                    {"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"accuracy", b.accuracy},
                    {"confidence", b.confidence}});
  }
  const json j = {{"n", r.n},
                  {"m_bins", r.m_bins},
                  {"accuracy", r.accuracy},
                  {"avg_confidence", r.avg_confidence},
                  {"nll", r.nll},
                  {"ece", r.ece},
                  {"mce", r.mce},
                  {"success_rate", r.success_rate},
                  {"sum_mean", r.sum_mean},
                  {"sum_variance", r.sum_variance},
                  {"bins", bins}};
  return j.dump(2);
}

EvalReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.n = j.at("n").get<std::size_t>();
    r.m_bins = j.at("m_bins").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.avg_confidence = j.at("avg_confidence").get<double>();
    r.nll = j.at("nll").get<double>();
    r.ece = j.at("ece").get<double>();
    r.mce = j.at("mce").get<double>();
    r.success_rate = j.at("success_rate").get<double>();
    r.sum_mean = j.at("sum_mean").get<double>();
    r.sum_variance = j.at("sum_variance").get<double>();
    for (const auto& b : j.at("bins")) {
      r.bins.push_back({b.at("bin_index").get<std::size_t>(), b.at("lower").get<double>(),
                        b.at("upper").get<double>(), b.at("count").get<std::size_t>(),
                        b.at("accuracy").get<double>(), b.at("confidence").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("report JSON: ") + e.what());
  }
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& b : r.bins) {
    out << "bin," << b.bin_index << ',' << format_double(b.lower) << ','
        << format_double(b.upper) << ',' << b.count << ',' << format_double(b.accuracy) << ','
        << format_double(b.confidence) << ",,,,,,\n";
  }
  out << "summary," << r.m_bins << ",0,1," << r.n << ',' << format_double(r.accuracy) << ','
      << format_double(r.avg_confidence) << ',' << format_double(r.nll) << ','
      << format_double(r.ece) << ',' << format_double(r.mce) << ','
      << format_double(r.success_rate) << ',' << format_double(r.sum_mean) << ','
      << format_double(r.sum_variance) << '\n';
  return out.str();
}

EvalReport report_from_csv(std::string_view text) {
  auto lines = split(text, '\n');
  if (lines.empty() || lines.front() != kCsvHeader) {
    throw Error(ErrorCode::SchemaError, "report CSV: missing or unexpected header");
  }
  EvalReport r;
  bool saw_summary = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 13) throw Error(ErrorCode::SchemaError, "report CSV: wrong field count", i + 1);
    if (f[0] == "bin") {
      r.bins.push_back({parse_size(f[1]), parse_double(f[2]), parse_double(f[3]),
                        parse_size(f[4]), parse_double(f[5]), parse_double(f[6])});
    } else if (f[0] == "summary") {
      r.m_bins = parse_size(f[1]);
      r.n = parse_size(f[4]);
      r.accuracy = parse_double(f[5]);
      r.avg_confidence = parse_double(f[6]);
      r.nll = parse_double(f[7]);
      r.ece = parse_double(f[8]);
      r.mce = parse_double(f[9]);
      r.success_rate = parse_double(f[10]);
      r.sum_mean = parse_double(f[11]);
      r.sum_variance = parse_double(f[12]);
      saw_summary = true;
    } else {
      throw Error(ErrorCode::SchemaError, "report CSV: unknown row kind", i + 1);
    }
  }
  if (!saw_summary) throw Error(ErrorCode::SchemaError, "report CSV: no summary row");
  return r;
}

}  // namespace vcal::metrics
