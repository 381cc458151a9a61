// SPDX-License-Identifier: Apache-2.0
#include "vcal/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <CLI11.hpp>
#include <json.hpp>

#include "vcal/error.hpp"
#include "vcal/metrics.hpp"

namespace vcal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitEmptyIntersection = 3;

std::string num(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes next to the target and renames, so a failed run never leaves a
// truncated artifact under the requested name.
void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

void write_records_file(const fs::path& path, std::span<const dataset::PredictionRecord> records) {
  std::ostringstream ss;
  dataset::write_records(ss, records);
  write_file(path, ss.str());
}

void require_path(const fs::path& p, std::string_view flag) {
  if (p.empty()) throw Error(ErrorCode::InvalidConfig, std::string(flag) + " is required");
}

void print_dropped(const dataset::FilterResult& filtered, std::ostream& err) {
  if (filtered.dropped_total() == 0) return;
  err << "dropped " << filtered.dropped_total() << " unparsed record(s):";
  for (const auto& [status, count] : filtered.dropped) err << ' ' << to_string(status) << '=' << count;
  err << '\n';
}

// ---------------------------------------------------------------------------
// report helpers

std::string reliability_csv(const metrics::EvalReport& r) {
  std::string s = "bin_index,lower,upper,count,accuracy,confidence\n";
  for (const auto& b : r.bins) {
    s += std::to_string(b.bin_index) + ',' + num(b.lower) + ',' + num(b.upper) + ',' +
         std::to_string(b.count) + ',' + num(b.accuracy) + ',' + num(b.confidence) + '\n';
  }
  return s;
}

std::string histogram_csv(const metrics::EvalReport& r) {
  std::string s = "bin_index,lower,upper,count,fraction\n";
  for (const auto& b : r.bins) {
    const double frac = r.n == 0 ? 0.0 : static_cast<double>(b.count) / static_cast<double>(r.n);
    s += std::to_string(b.bin_index) + ',' + num(b.lower) + ',' + num(b.upper) + ',' +
         std::to_string(b.count) + ',' + num(frac) + '\n';
  }
  return s;
}

std::string pr_csv(std::span<const metrics::PRPoint> points) {
  std::string s = "threshold,precision,recall\n";
  for (const auto& p : points) s += num(p.threshold) + ',' + num(p.precision) + ',' + num(p.recall) + '\n';
  return s;
}

std::string svg_num(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << v;
  return ss.str();
}

// Reliability diagram: per-bin accuracy bars over the identity line.
std::string reliability_svg(const metrics::EvalReport& r, std::string_view title) {
  constexpr double size = 400.0;
  constexpr double pad = 40.0;
  const double plot = size - 2 * pad;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
    << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << pad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"13\">" << title
    << " (ECE " << svg_num(r.ece * 100) << "%)</text>\n";
  for (const auto& b : r.bins) {
    if (b.count == 0) continue;
    const double x = pad + b.lower * plot;
    const double w = (b.upper - b.lower) * plot;
    const double h = b.accuracy * plot;
    s << "<rect x=\"" << svg_num(x) << "\" y=\"" << svg_num(pad + plot - h) << "\" width=\""
      << svg_num(w) << "\" height=\"" << svg_num(h)
      << "\" fill=\"#4a78b5\" stroke=\"white\"/>\n";
    const double cy = pad + plot - b.confidence * plot;
    s << "<line x1=\"" << svg_num(x) << "\" y1=\"" << svg_num(cy) << "\" x2=\"" << svg_num(x + w)
      << "\" y2=\"" << svg_num(cy) << "\" stroke=\"#d1495b\" stroke-width=\"2\"/>\n";
  }
  s << "<line x1=\"" << pad << "\" y1=\"" << pad + plot << "\" x2=\"" << pad + plot << "\" y2=\""
    << pad << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  s << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << plot << "\" height=\"" << plot
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << size / 2 - 30 << "\" y=\"" << size - 10
    << "\" font-family=\"sans-serif\" font-size=\"12\">confidence</text>\n";
  s << "<text x=\"12\" y=\"" << size / 2 + 25 << "\" font-family=\"sans-serif\" font-size=\"12\""
    << " transform=\"rotate(-90 12 " << size / 2 + 25 << ")\">accuracy</text>\n";
  s << "</svg>\n";
  return s.str();
}

void print_report_row(std::ostream& out, std::string_view kind, const metrics::EvalReport& r) {
  out << std::left << std::setw(13) << kind << std::right << std::fixed << std::setprecision(4)
      << " n=" << r.n << " acc=" << r.accuracy << " conf=" << r.avg_confidence << " ece=" << r.ece
      << " mce=" << r.mce << " nll=" << r.nll << '\n';
  out.unsetf(std::ios::floatfield);
}

// Writes every artifact for one report kind into out_dir.
void emit_report(const fs::path& out_dir, std::string_view kind, const metrics::EvalReport& report,
                 const std::optional<std::vector<metrics::PRPoint>>& pr, bool svg) {
  const std::string k(kind);
  write_file(out_dir / ("report_" + k + ".json"), metrics::report_to_json(report));
  write_file(out_dir / ("report_" + k + ".csv"), metrics::report_to_csv(report));
  write_file(out_dir / ("reliability_" + k + ".csv"), reliability_csv(report));
  write_file(out_dir / ("histogram_" + k + ".csv"), histogram_csv(report));
  if (pr) write_file(out_dir / ("pr_" + k + ".csv"), pr_csv(*pr));
  if (svg) write_file(out_dir / ("reliability_" + k + ".svg"), reliability_svg(report, kind));
}

// ---------------------------------------------------------------------------
// config JSON

template <typename T>
T get_as(const json& j, std::string_view key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "' has the wrong type");
  }
}

// Command-line values; unset ones leave the config untouched.
struct FlagValues {
  std::optional<std::string> config;
  std::optional<std::string> task;
  std::optional<std::string> labels;
  std::optional<std::string> positive_label;
  std::optional<std::string> input;
  std::vector<std::string> inputs;
  std::optional<std::string> output;
  std::optional<std::string> fit_path;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> m_bins;
  std::optional<std::string> objective;
  std::optional<std::string> mode;
  std::optional<std::string> c_rule;
  std::optional<double> tau_min;
  std::optional<double> tau_max;
  std::optional<std::size_t> grid_points;
  bool no_refine = false;
  std::optional<std::string> report_split;
  bool svg = false;
  bool mock = false;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<int> decimals;
  std::optional<double> beta;
  std::optional<double> latent_accuracy;
  std::optional<double> malformed_rate;
  std::optional<double> sum_noise;
  std::optional<double> validation_fraction;
  std::optional<std::string> model_id;
  std::optional<double> token_temperature;
  std::optional<std::string> endpoint;
  std::optional<std::string> endpoint_path;
  std::optional<std::string> model;
  std::optional<std::string> api_key_env;
  std::optional<double> timeout_seconds;
  std::optional<std::size_t> concurrency;
  std::optional<int> max_tokens;
  std::optional<std::string> template_family;
  std::optional<std::size_t> max_attempts;
  bool no_mutate = false;
};

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

void apply_flags(RunConfig& c, const FlagValues& f) {
  if (f.task) c.task = *f.task;
  if (f.labels) c.labels = split_labels(*f.labels);
  if (f.positive_label) c.positive_label = *f.positive_label;
  if (f.input) c.input = *f.input;
  if (!f.inputs.empty()) c.inputs.assign(f.inputs.begin(), f.inputs.end());
  if (f.output) c.output = *f.output;
  if (f.fit_path) c.fit_path = *f.fit_path;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.m_bins) c.m_bins = *f.m_bins;
  if (f.objective) c.objective = tuner::parse_objective(*f.objective);
  if (f.mode) c.mode = tuner::parse_mode(*f.mode);
  if (f.c_rule) c.c_rule = tuner::parse_offset_rule(*f.c_rule);
  if (f.tau_min) c.tau_min = *f.tau_min;
  if (f.tau_max) c.tau_max = *f.tau_max;
  if (f.grid_points) c.grid_points = *f.grid_points;
  if (f.no_refine) c.refine = false;
  if (f.report_split) c.report_split = *f.report_split;
  if (f.svg) c.svg = true;
  if (f.mock) c.mock = true;
  if (f.n) c.n = *f.n;
  if (f.seed) c.seed = *f.seed;
  if (f.decimals) c.decimals = *f.decimals;
  if (f.beta) c.beta = *f.beta;
  if (f.latent_accuracy) c.latent_accuracy = *f.latent_accuracy;
  if (f.malformed_rate) c.malformed_rate = *f.malformed_rate;
  if (f.sum_noise) c.sum_noise = *f.sum_noise;
  if (f.validation_fraction) c.validation_fraction = *f.validation_fraction;
  if (f.model_id) c.model_id = *f.model_id;
  if (f.token_temperature) c.token_temperature = *f.token_temperature;
  if (f.endpoint) c.endpoint = *f.endpoint;
  if (f.endpoint_path) c.endpoint_path = *f.endpoint_path;
  if (f.model) c.model = *f.model;
  if (f.api_key_env) c.api_key_env = *f.api_key_env;
  if (f.timeout_seconds) c.timeout_seconds = *f.timeout_seconds;
  if (f.concurrency) c.concurrency = *f.concurrency;
  if (f.max_tokens) c.max_tokens = *f.max_tokens;
  if (f.template_family) c.template_family = *f.template_family;
  if (f.max_attempts) c.max_attempts = *f.max_attempts;
  if (f.no_mutate) c.mutate_on_retry = false;
}

void add_task_flags(CLI::App& app, FlagValues& f) {
  app.add_option("--task", f.task, "Built-in task: imdb, emotion, massive (default imdb)");
  app.add_option("--labels", f.labels, "Comma-separated label set; overrides --task");
  app.add_option("--positive-label", f.positive_label, "Positive class for PR curves");
}

void add_search_flags(CLI::App& app, FlagValues& f) {
  app.add_option("--m-bins", f.m_bins, "Equal-width confidence bins (default 10)");
  app.add_option("--objective", f.objective, "nll (default) or ece");
  app.add_option("--mode", f.mode, "invert-softmax (default) or resoftmax-baseline");
  app.add_option("--c-rule", f.c_rule, "Logit offset: mean (default) or a number");
  app.add_option("--tau-min", f.tau_min, "Smallest temperature searched (default 0.05)");
  app.add_option("--tau-max", f.tau_max, "Largest temperature searched (default 10)");
  app.add_option("--grid-points", f.grid_points, "Log-spaced grid size (default 400)");
  app.add_flag("--no-refine", f.no_refine, "Skip the golden-section refinement");
}

void add_generation_flags(CLI::App& app, FlagValues& f) {
  app.add_option("--output,-o", f.output, "Records file to write (JSONL)");
  app.add_option("--input,-i", f.input, "Input texts (JSONL with text, gold_label, split)");
  app.add_option("--n", f.n, "Mock: number of records (default 1000)");
  app.add_option("--seed", f.seed, "Mock: RNG seed (default 0)");
  app.add_option("--decimals", f.decimals, "Mock: verbalized precision, 1 or 2 (default 2)");
  app.add_option("--beta", f.beta, "Mock: sharpness multiplier, > 1 is overconfident (default 1)");
  app.add_option("--accuracy", f.latent_accuracy, "Mock: latent argmax accuracy (default 0.8)");
  app.add_option("--malformed-rate", f.malformed_rate, "Mock: share of prose-only replies");
  app.add_option("--sum-noise", f.sum_noise, "Mock: sigma of the perturbation on one component");
  app.add_option("--val-fraction", f.validation_fraction, "Mock: validation share (default 0.5)");
  app.add_option("--model-id", f.model_id, "Model id stored in records (mock)");
  app.add_option("--token-temperature", f.token_temperature, "Generation temperature T");
  app.add_option("--endpoint", f.endpoint, "Chat-completion base URL, e.g. http://localhost:8080");
  app.add_option("--endpoint-path", f.endpoint_path, "Request path (default /v1/chat/completions)");
  app.add_option("--model", f.model, "Model name sent to the endpoint");
  app.add_option("--api-key-env", f.api_key_env, "Env var holding the bearer token (default VCAL_API_KEY)");
  app.add_option("--timeout", f.timeout_seconds, "Per-request timeout in seconds (default 60)");
  app.add_option("--concurrency", f.concurrency, "Max in-flight requests (default 4)");
  app.add_option("--max-tokens", f.max_tokens, "max_tokens sent to the endpoint (default 256)");
  app.add_option("--template", f.template_family, "claude-v2 (default), mixtral or claude-v3");
  app.add_option("--max-attempts", f.max_attempts, "Attempts per text while unparsed (default 3)");
  app.add_flag("--no-mutate", f.no_mutate, "Retry with the original instruction line");
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

dataset::TaskSpec RunConfig::task_spec() const {
  dataset::TaskSpec spec = labels.empty() ? dataset::builtin_task(task) : dataset::custom_task(task, labels);
  if (positive_label) spec.positive_label = *positive_label;
  spec.validate();
  return spec;
}

tuner::SearchConfig RunConfig::search() const {
  tuner::SearchConfig s;
  s.tau_min = tau_min;
  s.tau_max = tau_max;
  s.grid_points = grid_points;
  s.refine = refine;
  s.m_bins = m_bins;
  s.offset = c_rule;
  return s;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  (void)task_spec();
  if (m_bins < 1) fail("m_bins must be >= 1");
  if (!(std::isfinite(tau_min) && std::isfinite(tau_max) && tau_min > 0 && tau_max > tau_min)) {
    fail("need 0 < tau_min < tau_max");
  }
  if (grid_points < 2) fail("grid_points must be >= 2");
  if (report_split != "test" && report_split != "validation" && report_split != "all") {
    fail("report_split must be test, validation or all");
  }
  if (n < 1) fail("n must be >= 1");
  if (decimals != 1 && decimals != 2) fail("decimals must be 1 or 2");
  if (!(std::isfinite(beta) && beta > 0)) fail("beta must be positive");
  if (!(std::isfinite(validation_fraction) && validation_fraction >= 0 && validation_fraction <= 1)) {
    fail("validation_fraction must be in [0, 1]");
  }
  if (!(timeout_seconds > 0)) fail("timeout_seconds must be positive");
  if (concurrency < 1) fail("concurrency must be >= 1");
  if (max_tokens < 1) fail("max_tokens must be >= 1");
  if (max_attempts < 1 || max_attempts > 100) fail("max_attempts must be in [1, 100]");
}

void merge_config_json(RunConfig& c, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "task") c.task = get_as<std::string>(v, key);
    else if (key == "labels") c.labels = get_as<std::vector<std::string>>(v, key);
    else if (key == "positive_label") c.positive_label = get_as<std::string>(v, key);
    else if (key == "input") c.input = get_as<std::string>(v, key);
    else if (key == "inputs") {
      c.inputs.clear();
      for (const auto& p : get_as<std::vector<std::string>>(v, key)) c.inputs.emplace_back(p);
    }
    else if (key == "output") c.output = get_as<std::string>(v, key);
    else if (key == "fit_path") c.fit_path = get_as<std::string>(v, key);
    else if (key == "out_dir") c.out_dir = get_as<std::string>(v, key);
    else if (key == "m_bins") c.m_bins = get_as<std::size_t>(v, key);
    else if (key == "objective") c.objective = tuner::parse_objective(get_as<std::string>(v, key));
    else if (key == "mode") c.mode = tuner::parse_mode(get_as<std::string>(v, key));
    else if (key == "c_rule") {
      c.c_rule = v.is_number() ? OffsetRule{FixedOffset{v.get<double>()}}
                               : tuner::parse_offset_rule(get_as<std::string>(v, key));
    }
    else if (key == "tau_min") c.tau_min = get_as<double>(v, key);
    else if (key == "tau_max") c.tau_max = get_as<double>(v, key);
    else if (key == "grid_points") c.grid_points = get_as<std::size_t>(v, key);
    else if (key == "refine") c.refine = get_as<bool>(v, key);
    else if (key == "report_split") c.report_split = get_as<std::string>(v, key);
    else if (key == "svg") c.svg = get_as<bool>(v, key);
    else if (key == "mock") c.mock = get_as<bool>(v, key);
    else if (key == "n") c.n = get_as<std::size_t>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "decimals") c.decimals = get_as<int>(v, key);
    else if (key == "beta") c.beta = get_as<double>(v, key);
    else if (key == "latent_accuracy") c.latent_accuracy = get_as<double>(v, key);
    else if (key == "malformed_rate") c.malformed_rate = get_as<double>(v, key);
    else if (key == "sum_noise") c.sum_noise = get_as<double>(v, key);
    else if (key == "validation_fraction") c.validation_fraction = get_as<double>(v, key);
    else if (key == "model_id") c.model_id = get_as<std::string>(v, key);
    else if (key == "token_temperature") c.token_temperature = get_as<double>(v, key);
    else if (key == "endpoint") c.endpoint = get_as<std::string>(v, key);
    else if (key == "endpoint_path") c.endpoint_path = get_as<std::string>(v, key);
    else if (key == "model") c.model = get_as<std::string>(v, key);
    else if (key == "api_key_env") c.api_key_env = get_as<std::string>(v, key);
    else if (key == "timeout_seconds") c.timeout_seconds = get_as<double>(v, key);
    else if (key == "concurrency") c.concurrency = get_as<std::size_t>(v, key);
    else if (key == "max_tokens") c.max_tokens = get_as<int>(v, key);
    else if (key == "template_family") c.template_family = get_as<std::string>(v, key);
    else if (key == "max_attempts") c.max_attempts = get_as<std::size_t>(v, key);
    else if (key == "mutate_on_retry") c.mutate_on_retry = get_as<bool>(v, key);
    else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_elicit(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.validate();
  require_path(config.output, "--output");
  const auto task = config.task_spec();
  std::vector<dataset::PredictionRecord> records;

  if (config.mock) {
    elicitation::MockLLMConfig mock;
    mock.labels = task.labels;
    mock.n_classes = task.labels.size();
    mock.sharpness_beta = config.beta;
    mock.decimals = config.decimals;
    mock.malformed_rate = config.malformed_rate;
    mock.sum_noise_sigma = config.sum_noise;
    mock.latent_accuracy = config.latent_accuracy;
    mock.seed = config.seed;
    mock.validation_fraction = config.validation_fraction;
    mock.model_id = config.model_id;
    mock.token_temperature = config.token_temperature;
    records = elicitation::mock_generate(mock, config.n);
  } else {
    if (config.endpoint.empty()) {
      throw Error(ErrorCode::InvalidConfig, "choose --mock or give --endpoint");
    }
    require_path(config.input, "--input");
    elicitation::EndpointConfig ec;
    ec.base_url = config.endpoint;
    ec.path = config.endpoint_path;
    ec.model = config.model;
    ec.api_key_env = config.api_key_env;
    ec.timeout_seconds = config.timeout_seconds;
    ec.concurrency = config.concurrency;
    ec.max_tokens = config.max_tokens;
    elicitation::HttpChatEndpoint client(ec);
    const auto tmpl = elicitation::builtin_template(config.template_family, task.name);

    records = dataset::load_records(config.input, task);
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const auto& r : records) texts.push_back(r.text);
    const elicitation::RetryPolicy policy{config.max_attempts, config.mutate_on_retry};
    const elicitation::GenerationConfig gen{config.model, config.token_temperature, config.max_tokens};
    const auto results =
        elicitation::elicit_batch(client, tmpl, texts, task.labels, policy, gen, config.concurrency);
    for (std::size_t i = 0; i < records.size(); ++i) {
      records[i].raw_response = results[i].response;
      records[i].parse = parse_response(results[i].response, task.labels);
      records[i].calibrated.reset();
    }
  }

  write_records_file(config.output, records);
  const auto parsed = dataset::filter_parsed(records);
  out << "wrote " << records.size() << " records to " << config.output.string() << " ("
      << parsed.kept.size() << " parsed)\n";
  print_dropped(parsed, err);
  return kExitOk;
}

int cmd_parse(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.validate();
  require_path(config.input, "--input");
  require_path(config.output, "--output");
  const auto task = config.task_spec();
  auto records = dataset::load_records(config.input, task);
  for (auto& r : records) {
    r.parse = r.raw_response ? parse_response(*r.raw_response, task.labels) : ParseOutcome{};
  }
  write_records_file(config.output, records);
  const auto parsed = dataset::filter_parsed(records);
  out << "parsed " << parsed.kept.size() << " of " << records.size() << " records\n";
  print_dropped(parsed, err);
  return kExitOk;
}

int cmd_calibrate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.validate();
  require_path(config.input, "--input");
  require_path(config.output, "--output");
  require_path(config.fit_path, "--fit");
  const auto task = config.task_spec();
  auto records = dataset::load_records(config.input, task);
  const auto filtered = dataset::filter_parsed(records);
  print_dropped(filtered, err);

  const auto val = dataset::select_split(filtered.kept, dataset::Split::Validation);
  if (val.empty()) throw Error(ErrorCode::EmptyDataset, "no parsed validation records");
  const auto val_preds = dataset::predictions(val, dataset::Source::ParsedRaw);
  const auto fit = tuner::fit_temperature(val_preds, config.objective, config.mode, config.search());

  for (auto& r : records) {
    r.calibrated.reset();
    if (r.parse.status == ParseStatus::Parsed) {
      r.calibrated = tuner::apply_temperature(*r.parse.distribution, fit.tau_star, fit.mode, fit.offset);
    }
  }
  write_file(config.fit_path, tuner::fit_to_json(fit) + "\n");
  write_records_file(config.output, records);
  out << "tau* = " << num(fit.tau_star) << " (" << tuner::to_string(fit.objective) << ", "
      << tuner::to_string(fit.mode) << ", " << val.size() << " validation records)\n";
  return kExitOk;
}

int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.validate();
  require_path(config.input, "--input");
  require_path(config.out_dir, "--out-dir");
  const auto task = config.task_spec();
  const auto records = dataset::load_records(config.input, task);
  const auto filtered = dataset::filter_parsed(records);
  print_dropped(filtered, err);

  std::vector<dataset::PredictionRecord> selected;
  if (config.report_split == "all") {
    selected = filtered.kept;
  } else {
    const auto split = config.report_split == "test" ? dataset::Split::Test : dataset::Split::Validation;
    selected = dataset::select_split(filtered.kept, split);
  }
  if (selected.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no parsed records in split '" + config.report_split + "'");
  }

  const auto with_cal = static_cast<std::size_t>(std::count_if(
      selected.begin(), selected.end(), [](const auto& r) { return r.calibrated.has_value(); }));
  if (with_cal != 0 && with_cal != selected.size()) {
    throw Error(ErrorCode::InvalidConfig, "only some parsed records carry calibrated_distribution");
  }

  const auto sums = dataset::raw_sums(selected);
  const auto pos = task.positive_label;
  const auto uncal_preds = dataset::predictions(selected, dataset::Source::Parsed);
  const auto uncal = metrics::reliability_report(uncal_preds, config.m_bins, std::span<const double>(sums));
  std::optional<std::vector<metrics::PRPoint>> uncal_pr;
  if (pos) uncal_pr = metrics::pr_curve(dataset::predictions(selected, dataset::Source::ParsedRaw), *pos);
  emit_report(config.out_dir, "uncalibrated", uncal, uncal_pr, config.svg);
  print_report_row(out, "uncalibrated", uncal);

  if (with_cal == 0) {
    err << "no calibrated distributions in input; wrote the uncalibrated report only\n";
    return kExitOk;
  }
  const auto cal_preds = dataset::predictions(selected, dataset::Source::Calibrated);
  const auto cal = metrics::reliability_report(cal_preds, config.m_bins);
  std::optional<std::vector<metrics::PRPoint>> cal_pr;
  if (pos) cal_pr = metrics::pr_curve(cal_preds, *pos);
  emit_report(config.out_dir, "calibrated", cal, cal_pr, config.svg);
  print_report_row(out, "calibrated", cal);
  return kExitOk;
}

int cmd_aggregate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.validate();
  require_path(config.out_dir, "--out-dir");
  if (config.inputs.size() < 2) throw Error(ErrorCode::InvalidConfig, "aggregate needs at least two --inputs");
  const auto task = config.task_spec();

  std::map<std::string, std::vector<dataset::PredictionRecord>> per_file;
  std::vector<std::pair<std::string, fs::path>> outputs;
  std::set<std::string> names;
  for (const auto& path : config.inputs) {
    const std::string name = path.stem().string() + ".intersected.jsonl";
    if (!names.insert(name).second) {
      throw Error(ErrorCode::InvalidConfig, "input file names collide: " + path.string());
    }
    per_file[path.string()] = dataset::load_records(path, task);
    outputs.emplace_back(path.string(), config.out_dir / name);
  }

  const auto result = dataset::intersect_by_text(per_file);
  for (const auto& [key, target] : outputs) {
    const auto& kept = result.per_model.at(key);
    write_records_file(target, kept);
    out << target.string() << ": " << kept.size() << " of " << per_file.at(key).size() << " records\n";
  }
  if (result.empty) {
    err << "warning: EmptyIntersection: no input text is parsed in every file\n";
    return kExitEmptyIntersection;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibrate verbalized probability distributions"};
  app.name("vcal");
  app.require_subcommand(1);
  FlagValues f;

  auto* elicit = app.add_subcommand("elicit", "Collect verbalized distributions (endpoint or --mock)");
  auto* mock_gen = app.add_subcommand("mock-gen", "Same as elicit --mock");
  for (auto* sub : {elicit, mock_gen}) {
    add_task_flags(*sub, f);
    add_generation_flags(*sub, f);
  }
  elicit->add_flag("--mock", f.mock, "Use the seeded synthetic model");

  auto* parse = app.add_subcommand("parse", "Re-parse stored responses without calibrating");
  add_task_flags(*parse, f);
  parse->add_option("--input,-i", f.input, "Records file");
  parse->add_option("--output,-o", f.output, "Records file to write");

  auto* calibrate = app.add_subcommand("calibrate", "Fit tau on validation and calibrate all records");
  add_task_flags(*calibrate, f);
  add_search_flags(*calibrate, f);
  calibrate->add_option("--input,-i", f.input, "Records file");
  calibrate->add_option("--output,-o", f.output, "Calibrated records file to write");
  calibrate->add_option("--fit", f.fit_path, "Temperature fit JSON to write");

  auto* report = app.add_subcommand("report", "Uncalibrated and calibrated metric reports");
  add_task_flags(*report, f);
  report->add_option("--input,-i", f.input, "Records file (usually calibrated)");
  report->add_option("--out-dir", f.out_dir, "Directory for report files");
  report->add_option("--m-bins", f.m_bins, "Equal-width confidence bins (default 10)");
  report->add_option("--split", f.report_split, "test (default), validation or all");
  report->add_flag("--svg", f.svg, "Also render reliability diagrams as SVG");

  auto* aggregate = app.add_subcommand("aggregate", "Keep texts parsed by every model");
  add_task_flags(*aggregate, f);
  aggregate->add_option("--inputs", f.inputs, "Per-model records files (two or more)");
  aggregate->add_option("--out-dir", f.out_dir, "Directory for intersected files");

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    sub->add_option("--config", f.config, "JSON file with RunConfig fields");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig config;
    if (f.config) merge_config_json(config, read_file(*f.config));
    apply_flags(config, f);
    if (mock_gen->parsed()) config.mock = true;
    if (elicit->parsed() || mock_gen->parsed()) return cmd_elicit(config, out, err);
    if (parse->parsed()) return cmd_parse(config, out, err);
    if (calibrate->parsed()) return cmd_calibrate(config, out, err);
    if (report->parsed()) return cmd_report(config, out, err);
    if (aggregate->parsed()) return cmd_aggregate(config, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

}  // namespace vcal::cli
