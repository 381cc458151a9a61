// SPDX-License-Identifier: Apache-2.0
#include "vcal/elicitation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <httplib.h>
#include <json.hpp>
#include <mutex>
#include <random>
#include <thread>

#include "templates.hpp"
#include "vcal/error.hpp"

namespace vcal::elicitation {

namespace {

using nlohmann::json;

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string render_label_list(const std::vector<std::string>& labels, bool quoted) {
  std::string out = "[";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i > 0) out += ", ";
    out += quoted ? "'" + labels[i] + "'" : labels[i];
  }
  return out + "]";
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(gold score beats K-1 standard-normal competitors) when the gold score
// is N(mean, 1): integral of phi(x - mean) * Phi(x)^(K-1), Simpson's rule.
double argmax_accuracy(std::size_t k, double mean) {
  constexpr int kIntervals = 4000;
  const double lo = mean - 12.0;
  const double hi = mean + 12.0;
  const double h = (hi - lo) / kIntervals;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
  auto f = [&](double x) {
    const double d = x - mean;
    return inv_sqrt_2pi * std::exp(-0.5 * d * d) *
           std::pow(normal_cdf(x), static_cast<double>(k - 1));
  };
  double total = f(lo) + f(hi);
  for (int i = 1; i < kIntervals; ++i) total += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return total * h / 3.0;
}

std::mt19937_64 record_rng(std::uint64_t seed, std::size_t index) {
  const auto i = static_cast<std::uint64_t>(index);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
  return std::mt19937_64(seq);
}

std::string format_fixed(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string map_literal(const std::vector<std::string>& labels, const std::vector<double>& values,
                        int decimals) {
  std::string out = "{";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i > 0) out += ", ";
    out += "'" + labels[i] + "': " + format_fixed(values[i], decimals);
  }
  return out + "}";
}

std::string prose_reply(std::size_t variant, const std::string& top_label) {
  switch (variant) {
    case 0: return "I'm sorry, but I can't assign a probability to this text.";
    case 1: return "The overall tone of this text suggests the label " + top_label + ".";
    case 2:
      return "Based on the content, I would say this is most likely " + top_label +
             ", with fairly high confidence.";
    default: return "A probability distribution could not be determined for this input.";
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Templates

PromptTemplate builtin_template(std::string_view family, std::string_view task) {
  const auto spec = dataset::builtin_task(task);
  PromptTemplate t;
  t.task_name = spec.name;
  const bool single = family == "claude-v2" || family == "mixtral";
  if (!single && family != "claude-v3") {
    throw Error(ErrorCode::InvalidConfig, "unknown template family '" + std::string(family) + "'");
  }
  if (single) {
    t.layout = PromptLayout::SingleUserMessage;
    if (task == "imdb") {
      t.template_text = detail::kSingleUser_imdb;
      t.label_list_rendered = "(positive or negative)";
    } else if (task == "emotion") {
      t.template_text = detail::kSingleUser_emotion;
      t.label_list_rendered = render_label_list(spec.labels, false);
    } else {
      t.template_text = detail::kSingleUser_massive;
      std::string list = "[";
      for (std::size_t i = 0; i < spec.labels.size(); ++i) {
        list += (i > 0 ? ", \"" : "\"") + spec.labels[i] + "\"";
      }
      t.label_list_rendered = list + "]";
    }
    return t;
  }
  t.layout = PromptLayout::SystemPlusUser;
  t.template_text = std::string(kPlaceholder);
  if (task == "imdb") {
    t.system_text = detail::kSystem_imdb;
    t.label_list_rendered = "(negative or positive)";
  } else if (task == "emotion") {
    t.system_text = detail::kSystem_emotion;
    t.label_list_rendered = render_label_list(spec.labels, false);
  } else {
    t.system_text = detail::kSystem_massive;
    t.label_list_rendered = render_label_list(spec.labels, true);
  }
  return t;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::InvalidConfig, "cannot render an empty input text");
  const auto n = count_occurrences(tmpl.template_text, kPlaceholder);
  if (n != 1) {
    throw Error(ErrorCode::MissingPlaceholder,
                "template must contain exactly one $text placeholder, found " + std::to_string(n));
  }
  std::string body = tmpl.template_text;
  body.replace(body.find(kPlaceholder), kPlaceholder.size(), text);
  RenderedPrompt out;
  if (tmpl.layout == PromptLayout::SystemPlusUser) out.messages.push_back({"system", tmpl.system_text});
  out.messages.push_back({"user", std::move(body)});
  return out;
}

RenderedPrompt mutate_instruction(RenderedPrompt prompt) {
  for (auto& m : prompt.messages) m.content = replace_all(m.content, "no other words", "remove other words");
  return prompt;
}

// ---------------------------------------------------------------------------
// Wire format

std::string request_to_json(const ChatRequest& request) {
  using ojson = nlohmann::ordered_json;
  ojson messages = ojson::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  const ojson j = {{"model", request.model},
                  {"messages", messages},
                  {"temperature", request.temperature},
                  {"max_tokens", request.max_tokens}};
  return j.dump();
}

ChatRequest request_from_json(std::string_view body) {
  try {
    const json j = json::parse(body);
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
      r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    r.temperature = j.value("temperature", 0.0);
    r.max_tokens = j.value("max_tokens", 256);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("chat request: ") + e.what());
  }
}

std::string reply_to_json(std::string_view content) {
  using ojson = nlohmann::ordered_json;
  const ojson j = {{"choices", ojson::array({{{"index", 0},
                                            {"message", {{"role", "assistant"}, {"content", content}}}}})}};
  return j.dump();
}

std::string reply_from_json(std::string_view body) {
  try {
    const json j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("unexpected reply shape: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// HTTP endpoint

void EndpointConfig::validate() const {
  if (base_url.empty()) throw Error(ErrorCode::InvalidConfig, "endpoint base_url is empty");
  if (model.empty()) throw Error(ErrorCode::InvalidConfig, "endpoint model is empty");
  if (api_key_env.empty()) throw Error(ErrorCode::InvalidConfig, "api_key_env is empty");
  if (!(timeout_seconds > 0.0)) throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
  if (concurrency == 0) throw Error(ErrorCode::InvalidConfig, "concurrency must be >= 1");
  if (max_tokens <= 0) throw Error(ErrorCode::InvalidConfig, "max_tokens must be positive");
}

EndpointConfig endpoint_config_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    EndpointConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.path = j.value("path", c.path);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("endpoint config: ") + e.what());
  }
}

HttpChatEndpoint::HttpChatEndpoint(EndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::AuthError,
                "credential environment variable " + config_.api_key_env + " is not set");
  }
  api_key_ = key;
}

std::string HttpChatEndpoint::complete(const ChatRequest& request) {
  httplib::Client client(config_.base_url);
  if (!client.is_valid()) throw Error(ErrorCode::InvalidConfig, "bad base_url " + config_.base_url);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  const auto res = client.Post(config_.path, headers, request_to_json(request), "application/json");
  if (!res) {
    throw Error(ErrorCode::TransportError, "request failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 401 || res->status == 403) {
    throw Error(ErrorCode::AuthError, "endpoint rejected credentials (HTTP " +
                                          std::to_string(res->status) + ")");
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::TransportError, "HTTP " + std::to_string(res->status));
  }
  return reply_from_json(res->body);
}

// ---------------------------------------------------------------------------
// Retry loop

void RetryPolicy::validate() const {
  if (max_attempts < 1 || max_attempts > 100) {
    throw Error(ErrorCode::InvalidConfig, "max_attempts must be in [1, 100]");
  }
}

Elicitation elicit(ChatEndpoint& endpoint, const PromptTemplate& tmpl, std::string_view text,
                   std::span<const std::string> labels, const RetryPolicy& policy,
                   const GenerationConfig& gen) {
  policy.validate();
  const RenderedPrompt original = render_prompt(tmpl, text);
  const RenderedPrompt mutated = mutate_instruction(original);

  std::optional<Elicitation> last;
  for (std::size_t attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    const auto& prompt = attempt > 1 && policy.mutate_on_retry ? mutated : original;
    const ChatRequest request{gen.model, prompt.messages, gen.token_temperature, gen.max_tokens};
    std::string reply;
    try {
      reply = endpoint.complete(request);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::AuthError) throw;
      if (attempt == policy.max_attempts) {
        if (last) return *last;
        throw;
      }
      continue;
    }
    last = Elicitation{RawResponse{std::move(reply), gen.model, gen.token_temperature}, attempt};
    if (parse_response(last->response, labels).status == ParseStatus::Parsed) break;
  }
  return *last;
}

std::vector<Elicitation> elicit_batch(ChatEndpoint& endpoint, const PromptTemplate& tmpl,
                                      std::span<const std::string> texts,
                                      std::span<const std::string> labels,
                                      const RetryPolicy& policy, const GenerationConfig& gen,
                                      std::size_t max_in_flight) {
  if (max_in_flight == 0) throw Error(ErrorCode::InvalidConfig, "max_in_flight must be >= 1");
  std::vector<Elicitation> results(texts.size());
  std::vector<std::exception_ptr> errors(texts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < texts.size(); i = next++) {
      try {
        results[i] = elicit(endpoint, tmpl, texts[i], labels, policy, gen);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n_workers = std::min(max_in_flight, std::max<std::size_t>(texts.size(), 1));
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

// ---------------------------------------------------------------------------
// Synthetic model

void MockLLMConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (n_classes < 2) fail("n_classes must be >= 2");
  if (!std::isfinite(sharpness_beta) || sharpness_beta <= 0.0) fail("sharpness_beta must be > 0");
  if (decimals != 1 && decimals != 2) fail("decimals must be 1 or 2");
  if (!(malformed_rate >= 0.0 && malformed_rate <= 1.0)) fail("malformed_rate must be in [0, 1]");
  if (!(sum_noise_sigma >= 0.0) || !std::isfinite(sum_noise_sigma)) fail("sum_noise_sigma must be >= 0");
  if (!(latent_accuracy > 1.0 / static_cast<double>(n_classes) && latent_accuracy <= 1.0)) {
    fail("latent_accuracy must be in (1/K, 1]");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction <= 1.0)) {
    fail("validation_fraction must be in [0, 1]");
  }
  if (!labels.empty() && labels.size() != n_classes) fail("labels must have n_classes entries");
}

std::vector<std::string> MockLLMConfig::resolved_labels() const {
  if (!labels.empty()) return labels;
  if (n_classes == 2) return dataset::builtin_task("imdb").labels;
  if (n_classes == 6) return dataset::builtin_task("emotion").labels;
  if (n_classes == 60) return dataset::builtin_task("massive").labels;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n_classes; ++i) out.push_back("class_" + std::to_string(i));
  return out;
}

double latent_mean_for_accuracy(std::size_t n_classes, double accuracy) {
  constexpr double kMaxMean = 40.0;
  if (n_classes < 2 || !(accuracy > 1.0 / static_cast<double>(n_classes)) || accuracy > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "accuracy must be in (1/K, 1]");
  }
  if (argmax_accuracy(n_classes, kMaxMean) <= accuracy) return kMaxMean;
  double lo = 0.0;
  double hi = kMaxMean;
  for (int iter = 0; iter < 100; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (argmax_accuracy(n_classes, mid) < accuracy ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MockDataset mock_generate_detailed(const MockLLMConfig& cfg, std::size_t n_records) {
  cfg.validate();
  if (n_records == 0) throw Error(ErrorCode::InvalidConfig, "n_records must be >= 1");
  const auto labels = cfg.resolved_labels();
  const std::size_t k = cfg.n_classes;
  const double separation = latent_mean_for_accuracy(k, cfg.latent_accuracy);
  const double scale = std::pow(10.0, cfg.decimals);
  const auto n_val = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_records) * cfg.validation_fraction));

  MockDataset out;
  out.records.reserve(n_records);
  out.draws.reserve(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    auto rng = record_rng(cfg.seed, i);
    // Fixed draw order so records do not depend on beta, decimals or rates.
    MockDraw draw;
    draw.gold = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    draw.latent_logits.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      const double score = normal(rng) + (j == draw.gold ? separation : 0.0);
      // With gold scores N(s, 1) and the rest N(0, 1), the posterior over the
      // gold label is softmax(s * score), so these logits are calibrated.
      draw.latent_logits[j] = separation * score;
    }
    const double malformed_draw = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const std::size_t noise_index = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    const double noise = normal(rng) * cfg.sum_noise_sigma;
    const std::size_t prose_variant = std::uniform_int_distribution<std::size_t>(0, 3)(rng);

    std::vector<double> probs(k);
    softmax_into(draw.latent_logits, 1.0 / cfg.sharpness_beta, probs);
    if (cfg.sum_noise_sigma > 0.0) probs[noise_index] = std::max(0.0, probs[noise_index] + noise);
    draw.verbalized.resize(k);
    for (std::size_t j = 0; j < k; ++j) draw.verbalized[j] = std::round(probs[j] * scale) / scale;
    // A verbalized all-zero map is not a distribution; keep the top class at
    // the smallest expressible mass.
    if (std::all_of(draw.verbalized.begin(), draw.verbalized.end(), [](double v) { return v == 0.0; })) {
      draw.verbalized[argmax(probs)] = 1.0 / scale;
    }
    draw.malformed = malformed_draw < cfg.malformed_rate;

    const std::string reply = draw.malformed
                                  ? prose_reply(prose_variant, labels[argmax(probs)])
                                  : map_literal(labels, draw.verbalized, cfg.decimals);
    dataset::PredictionRecord record;
    record.text = "mock example " + std::to_string(i);
    record.gold_label = labels[draw.gold];
    record.raw_response = RawResponse{reply, cfg.model_id, cfg.token_temperature};
    record.parse = parse_response(reply, labels);
    record.split = i < n_val ? dataset::Split::Validation : dataset::Split::Test;
    out.records.push_back(std::move(record));
    out.draws.push_back(std::move(draw));
  }
  return out;
}

std::vector<dataset::PredictionRecord> mock_generate(const MockLLMConfig& cfg, std::size_t n_records) {
  return mock_generate_detailed(cfg, n_records).records;
}

}  // namespace vcal::elicitation
