// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <httplib.h>
#include <json.hpp>
#include <mutex>
#include <set>
#include <thread>

#include "vcal/elicitation.hpp"
#include "vcal/error.hpp"
#include "vcal/metrics.hpp"

using namespace vcal;
using namespace vcal::elicitation;

namespace {

const std::vector<std::string> kImdbLabels{"negative", "positive"};
const std::string kGood = "{'negative': 0.1, 'positive': 0.9}";

// Replays a fixed list of replies (or errors) and records every request.
class ScriptedEndpoint final : public ChatEndpoint {
 public:
  struct Step {
    std::string reply;
    std::optional<ErrorCode> error;
  };
  explicit ScriptedEndpoint(std::vector<Step> steps) : steps_(std::move(steps)) {}

  std::string complete(const ChatRequest& request) override {
    std::lock_guard lock(mu_);
    requests.push_back(request);
    const Step& s = steps_[std::min(requests.size() - 1, steps_.size() - 1)];
    if (s.error) throw Error(*s.error, "scripted failure");
    return s.reply;
  }

  std::vector<ChatRequest> requests;

 private:
  std::mutex mu_;
  std::vector<Step> steps_;
};

// Echoes a parseable reply whose "positive" value encodes the input text, and
// tracks how many calls overlap.
class EchoEndpoint final : public ChatEndpoint {
 public:
  std::string complete(const ChatRequest& request) override {
    const int now = ++in_flight_;
    int seen = max_in_flight.load();
    while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --in_flight_;
    const auto& content = request.messages.back().content;
    const auto pos = content.find("#");
    const std::string digits = content.substr(pos + 1, content.find('.', pos) - pos - 1);
    if (digits == "13") throw Error(ErrorCode::TransportError, "boom");
    return "{'negative': 0, 'positive': " + digits + "}";
  }
  std::atomic<int> max_in_flight{0};

 private:
  std::atomic<int> in_flight_{0};
};

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Templates

TEST_CASE("IMDB template renders the input into one user message") {
  for (const char* family : {"claude-v2", "mixtral"}) {
    const auto prompt = render_prompt(builtin_template(family, "imdb"), "great movie");
    REQUIRE(prompt.messages.size() == 1);
    CHECK(prompt.messages[0].role == "user");
    const auto& text = prompt.messages[0].content;
    CHECK(text.find("great movie") != std::string::npos);
    CHECK(text.find("binary sentiment label") != std::string::npos);
    CHECK(text.find("in a format of Python dict") != std::string::npos);
    CHECK(text.find("$text") == std::string::npos);
    CHECK(text.rfind("Give a binary sentiment label (positive or negative) to the following sentence: great movie.", 0) == 0);
  }
}

TEST_CASE("emotion template lists the six labels in order") {
  const auto t = builtin_template("claude-v2", "emotion");
  CHECK(t.template_text.find("[sadness, joy, love, anger, fear, surprise]") != std::string::npos);
  CHECK(t.label_list_rendered == "[sadness, joy, love, anger, fear, surprise]");
  const auto v3 = builtin_template("claude-v3", "emotion");
  CHECK(v3.system_text.find("[sadness, joy, love, anger, fear, surprise]") != std::string::npos);
}

TEST_CASE("massive templates name all sixty intents") {
  const auto labels = dataset::builtin_task("massive").labels;
  const auto v2 = builtin_template("claude-v2", "massive");
  const auto v3 = builtin_template("claude-v3", "massive");
  for (const auto& l : labels) {
    CHECK(count(v2.template_text, "\"" + l + "\"") == 1);
    CHECK(count(v3.system_text, "'" + l + "'") == 1);
  }
  CHECK(v2.template_text.find("60 intent labels") != std::string::npos);
}

TEST_CASE("system-plus-user layout") {
  const auto t = builtin_template("claude-v3", "imdb");
  CHECK(t.layout == PromptLayout::SystemPlusUser);
  const auto prompt = render_prompt(t, "so boring");
  REQUIRE(prompt.messages.size() == 2);
  CHECK(prompt.messages[0].role == "system");
  CHECK(prompt.messages[0].content.find("Give ONLY the probability, no other words or explanation.") !=
        std::string::npos);
  CHECK(prompt.messages[1] == ChatMessage{"user", "so boring"});
}

TEST_CASE("every built-in template has exactly one placeholder") {
  for (const char* family : {"claude-v2", "mixtral", "claude-v3"}) {
    for (const char* task : {"imdb", "emotion", "massive"}) {
      const auto t = builtin_template(family, task);
      CHECK(count(t.template_text, "$text") == 1);
      CHECK(t.task_name == task);
    }
  }
  CHECK_THROWS_AS(builtin_template("gpt", "imdb"), Error);
  CHECK_THROWS_AS(builtin_template("claude-v2", "sst2"), Error);
}

TEST_CASE("placeholder and text checks") {
  PromptTemplate t;
  t.template_text = "no placeholder here";
  try {
    render_prompt(t, "x");
    FAIL("expected MissingPlaceholder");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingPlaceholder);
  }
  t.template_text = "$text and $text";
  CHECK_THROWS_AS(render_prompt(t, "x"), Error);
  CHECK_THROWS_AS(render_prompt(builtin_template("claude-v2", "imdb"), ""), Error);
}

TEST_CASE("retry mutation edits the instruction line") {
  const auto prompt = render_prompt(builtin_template("claude-v3", "imdb"), "fine");
  const auto mutated = mutate_instruction(prompt);
  CHECK(mutated.messages[0].content.find("Give ONLY the probability, remove other words or explanation.") !=
        std::string::npos);
  CHECK(mutated.messages[0].content.find("no other words") == std::string::npos);
  CHECK(mutated.messages[1] == prompt.messages[1]);
}

// ---------------------------------------------------------------------------
// Wire format

TEST_CASE("request and reply JSON") {
  const ChatRequest req{"m-1", {{"system", "s"}, {"user", "u"}}, 0.5, 64};
  CHECK(request_to_json(req) ==
        R"({"model":"m-1","messages":[{"role":"system","content":"s"},{"role":"user","content":"u"}],"temperature":0.5,"max_tokens":64})");
  const auto back = request_from_json(request_to_json(req));
  CHECK(back.model == "m-1");
  CHECK(back.messages == req.messages);
  CHECK(back.temperature == 0.5);
  CHECK(back.max_tokens == 64);
  CHECK(reply_to_json("hi") == R"({"choices":[{"index":0,"message":{"role":"assistant","content":"hi"}}]})");
  CHECK(reply_from_json(reply_to_json("hi")) == "hi");
  CHECK(reply_from_json(R"({"choices":[{"text":"legacy"}]})") == "legacy");
  CHECK_THROWS_AS(reply_from_json(R"({"choices":[]})"), Error);
  CHECK_THROWS_AS(reply_from_json("<html>"), Error);
}

TEST_CASE("endpoint config from JSON") {
  const auto c = endpoint_config_from_json(
      R"({"base_url": "http://localhost:9", "model": "m", "api_key_env": "K", "timeout_seconds": 5, "concurrency": 2})");
  CHECK(c.base_url == "http://localhost:9");
  CHECK(c.path == "/v1/chat/completions");
  CHECK(c.concurrency == 2);
  CHECK_THROWS_AS(endpoint_config_from_json(R"({"model": "m"})"), Error);
  CHECK_THROWS_AS(endpoint_config_from_json(R"({"base_url": "http://x", "model": "m", "concurrency": 0})"), Error);
}

// ---------------------------------------------------------------------------
// Retry policy

TEST_CASE("parseable first reply takes one attempt") {
  ScriptedEndpoint ep({{kGood, std::nullopt}});
  const auto out = elicit(ep, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {}, {"m", 0.0, 256});
  CHECK(out.attempts == 1);
  CHECK(ep.requests.size() == 1);
  CHECK(out.response.text == kGood);
  CHECK(out.response.model_id == "m");
}

TEST_CASE("prose reply is retried with the mutated instruction") {
  ScriptedEndpoint ep({{"The sentiment is positive.", std::nullopt}, {kGood, std::nullopt}});
  const auto out = elicit(ep, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {}, {"m", 1.0, 256});
  CHECK(out.attempts == 2);
  REQUIRE(ep.requests.size() == 2);
  CHECK(ep.requests[0].messages[0].content.find("no other words") != std::string::npos);
  CHECK(ep.requests[1].messages[0].content.find("remove other words") != std::string::npos);
  CHECK(ep.requests[1].temperature == 1.0);
}

TEST_CASE("retries can keep the original prompt") {
  ScriptedEndpoint ep({{"nope", std::nullopt}, {kGood, std::nullopt}});
  RetryPolicy policy{3, false};
  elicit(ep, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, policy, {"m", 0.0, 256});
  CHECK(ep.requests[1].messages == ep.requests[0].messages);
}

TEST_CASE("all attempts malformed returns the last reply") {
  ScriptedEndpoint ep({{"first", std::nullopt}, {"second", std::nullopt}, {"third", std::nullopt}});
  const auto out = elicit(ep, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {3, true}, {"m", 0.0, 256});
  CHECK(out.attempts == 3);
  CHECK(out.response.text == "third");
  CHECK(parse_response(out.response, kImdbLabels).status == ParseStatus::Malformed);
}

TEST_CASE("property: never more calls than max_attempts") {
  for (std::size_t max = 1; max <= 6; ++max) {
    ScriptedEndpoint ep({{"garbage", std::nullopt}});
    elicit(ep, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {max, true}, {"m", 0.0, 256});
    CHECK(ep.requests.size() == max);
  }
}

TEST_CASE("transport failures consume attempts") {
  ScriptedEndpoint recovering({{"", ErrorCode::TransportError}, {kGood, std::nullopt}});
  CHECK(elicit(recovering, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {}, {"m", 0.0, 256}).attempts == 2);

  ScriptedEndpoint dead({{"", ErrorCode::TransportError}});
  try {
    elicit(dead, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {3, true}, {"m", 0.0, 256});
    FAIL("expected TransportError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TransportError);
  }
  CHECK(dead.requests.size() == 3);

  ScriptedEndpoint late({{"prose", std::nullopt}, {"", ErrorCode::TransportError}});
  const auto out = elicit(late, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {2, true}, {"m", 0.0, 256});
  CHECK(out.response.text == "prose");
}

TEST_CASE("auth failures are not retried") {
  ScriptedEndpoint ep({{"", ErrorCode::AuthError}});
  CHECK_THROWS_AS(elicit(ep, builtin_template("claude-v2", "imdb"), "t", kImdbLabels, {}, {"m", 0.0, 256}), Error);
  CHECK(ep.requests.size() == 1);
  CHECK_THROWS_AS(RetryPolicy({0, true}).validate(), Error);
}

TEST_CASE("batch keeps input order and bounds concurrency") {
  EchoEndpoint ep;
  std::vector<std::string> texts;
  for (int i = 0; i < 40; ++i) texts.push_back("#" + std::to_string(100 + i));
  const auto out = elicit_batch(ep, builtin_template("claude-v2", "imdb"), texts, kImdbLabels, {1, true},
                                {"m", 0.0, 256}, 3);
  REQUIRE(out.size() == texts.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].response.text == "{'negative': 0, 'positive': " + std::to_string(100 + i) + "}");
  }
  CHECK(ep.max_in_flight.load() <= 3);
  CHECK(ep.max_in_flight.load() >= 1);
}

TEST_CASE("batch rethrows the first failure after finishing") {
  EchoEndpoint ep;
  const std::vector<std::string> texts{"#1", "#13", "#2"};
  CHECK_THROWS_AS(elicit_batch(ep, builtin_template("claude-v2", "imdb"), texts, kImdbLabels, {1, true},
                               {"m", 0.0, 256}, 2),
                  Error);
  CHECK_THROWS_AS(elicit_batch(ep, builtin_template("claude-v2", "imdb"), texts, kImdbLabels, {1, true},
                               {"m", 0.0, 256}, 0),
                  Error);
}

// ---------------------------------------------------------------------------
// HTTP client against a local server

TEST_CASE("HTTP client speaks the documented wire format") {
  httplib::Server server;
  std::mutex mu;
  std::vector<std::string> auth_headers;
  std::vector<std::string> bodies;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(mu);
      auth_headers.push_back(req.get_header_value("Authorization"));
      bodies.push_back(req.body);
    }
    res.set_content(reply_to_json(kGood), "application/json");
  });
  server.Post("/denied", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("VCAL_TEST_KEY", "sekret", 1);
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.model = "local-model";
  cfg.api_key_env = "VCAL_TEST_KEY";
  cfg.timeout_seconds = 5;

  HttpChatEndpoint client(cfg);
  const auto out = elicit(client, builtin_template("claude-v3", "imdb"), "a fine film", kImdbLabels, {},
                          {"local-model", 0.0, 128});
  CHECK(out.attempts == 1);
  CHECK(parse_response(out.response, kImdbLabels).status == ParseStatus::Parsed);
  {
    std::lock_guard lock(mu);
    REQUIRE(bodies.size() == 1);
    CHECK(auth_headers[0] == "Bearer sekret");
    const auto sent = request_from_json(bodies[0]);
    CHECK(sent.model == "local-model");
    CHECK(sent.max_tokens == 128);
    REQUIRE(sent.messages.size() == 2);
    CHECK(sent.messages[1].content == "a fine film");
  }

  auto denied_cfg = cfg;
  denied_cfg.path = "/denied";
  HttpChatEndpoint denied(denied_cfg);
  try {
    denied.complete(ChatRequest{"m", {{"user", "x"}}, 0.0, 8});
    FAIL("expected AuthError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AuthError);
  }

  auto broken_cfg = cfg;
  broken_cfg.path = "/broken";
  HttpChatEndpoint broken(broken_cfg);
  try {
    broken.complete(ChatRequest{"m", {{"user", "x"}}, 0.0, 8});
    FAIL("expected TransportError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TransportError);
  }

  server.stop();
  thread.join();
}

TEST_CASE("HTTP client needs its credential variable") {
  ::unsetenv("VCAL_TEST_MISSING_KEY");
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.model = "m";
  cfg.api_key_env = "VCAL_TEST_MISSING_KEY";
  try {
    HttpChatEndpoint client(cfg);
    FAIL("expected AuthError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AuthError);
  }
}

TEST_CASE("unreachable server is a transport error") {
  ::setenv("VCAL_TEST_KEY", "k", 1);
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.model = "m";
  cfg.api_key_env = "VCAL_TEST_KEY";
  cfg.timeout_seconds = 1;
  HttpChatEndpoint client(cfg);
  try {
    client.complete(ChatRequest{"m", {{"user", "x"}}, 0.0, 8});
    FAIL("expected TransportError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TransportError);
  }
}

// ---------------------------------------------------------------------------
// Synthetic model

namespace {

std::vector<metrics::LabeledPrediction> normalized_predictions(const std::vector<dataset::PredictionRecord>& rs) {
  std::vector<metrics::LabeledPrediction> out;
  for (const auto& r : rs) {
    if (r.parse.distribution) out.push_back({r.parse.distribution->normalized(), r.gold_label});
  }
  return out;
}

}  // namespace

TEST_CASE("mock generation is bit-deterministic") {
  MockLLMConfig cfg;
  cfg.n_classes = 6;
  cfg.latent_accuracy = 0.6;
  cfg.malformed_rate = 0.1;
  cfg.sum_noise_sigma = 0.02;
  cfg.seed = 77;
  const auto a = mock_generate(cfg, 500);
  const auto b = mock_generate(cfg, 500);
  CHECK(a == b);
  cfg.seed = 78;
  CHECK(mock_generate(cfg, 500) != a);
  // Draws for record i do not depend on how many records follow (the split
  // does, since it is a leading share).
  cfg.seed = 77;
  const auto prefix = mock_generate(cfg, 100);
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    CHECK(prefix[i].raw_response == a[i].raw_response);
    CHECK(prefix[i].gold_label == a[i].gold_label);
  }
}

TEST_CASE("mock with beta 1 and no noise sums to one") {
  MockLLMConfig cfg;
  cfg.seed = 1;
  const auto rs = mock_generate(cfg, 2000);
  std::vector<double> sums;
  for (const auto& r : rs) sums.push_back(*r.parse.raw_sum);
  // Two binary values rounded to 2 decimals always sum to exactly 1.
  CHECK(metrics::success_rate(sums) == 1.0);
  CHECK(metrics::sum_stats(sums).mean == doctest::Approx(1.0));

  cfg.n_classes = 6;
  cfg.latent_accuracy = 0.6;
  const auto six = mock_generate(cfg, 2000);
  sums.clear();
  for (const auto& r : six) sums.push_back(*r.parse.raw_sum);
  // Six rounded values often miss 1 by a cent, but not on average.
  CHECK(metrics::success_rate(sums) < 1.0);
  CHECK(std::abs(metrics::sum_stats(sums).mean - 1.0) < 0.01);
}

TEST_CASE("sum noise moves sums away from one") {
  MockLLMConfig cfg;
  cfg.seed = 2;
  cfg.sum_noise_sigma = 0.1;
  std::vector<double> sums;
  for (const auto& r : mock_generate(cfg, 2000)) sums.push_back(*r.parse.raw_sum);
  CHECK(metrics::success_rate(sums) < 0.9);
  CHECK(metrics::sum_stats(sums).variance > 1e-3);
}

TEST_CASE("overconfident mock: mean confidence exceeds accuracy") {
  MockLLMConfig cfg;
  cfg.seed = 3;
  cfg.sharpness_beta = 3.0;
  const auto preds = normalized_predictions(mock_generate(cfg, 3000));
  CHECK(metrics::mean_confidence(preds) > metrics::accuracy(preds) + 0.05);
}

TEST_CASE("latent accuracy is hit") {
  for (std::size_t k : {2u, 6u, 60u}) {
    MockLLMConfig cfg;
    cfg.n_classes = k;
    cfg.latent_accuracy = 0.7;
    cfg.seed = 4;
    const auto data = mock_generate_detailed(cfg, 6000);
    std::size_t hits = 0;
    for (const auto& d : data.draws) hits += argmax(d.latent_logits) == d.gold ? 1 : 0;
    CHECK(static_cast<double>(hits) / 6000.0 == doctest::Approx(0.7).epsilon(0.05));
  }
  CHECK(latent_mean_for_accuracy(2, 0.6) < latent_mean_for_accuracy(2, 0.9));
  CHECK(latent_mean_for_accuracy(6, 0.6) > latent_mean_for_accuracy(2, 0.6));
  CHECK_THROWS_AS(latent_mean_for_accuracy(4, 0.25), Error);
}

TEST_CASE("property: larger beta raises mean confidence on the same draws") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    double prev = 0.0;
    for (double beta : {0.3, 0.6, 1.0, 2.0, 4.0}) {
      MockLLMConfig cfg;
      cfg.n_classes = 6;
      cfg.latent_accuracy = 0.6;
      cfg.sharpness_beta = beta;
      cfg.seed = seed;
      const double conf = metrics::mean_confidence(normalized_predictions(mock_generate(cfg, 500)));
      CHECK(conf > prev);
      prev = conf;
    }
  }
}

TEST_CASE("decimals control the number of distinct values") {
  MockLLMConfig cfg;
  cfg.seed = 5;
  cfg.decimals = 1;
  std::set<double> one;
  for (const auto& d : mock_generate_detailed(cfg, 2000).draws) one.insert(d.verbalized.begin(), d.verbalized.end());
  CHECK(one.size() <= 11);
  cfg.decimals = 2;
  std::set<double> two;
  for (const auto& d : mock_generate_detailed(cfg, 2000).draws) two.insert(d.verbalized.begin(), d.verbalized.end());
  CHECK(two.size() > 11);
  const auto r = mock_generate(cfg, 3);
  CHECK(r[0].raw_response->text.find("0.") != std::string::npos);
}

TEST_CASE("mock response text uses the dict style") {
  MockLLMConfig cfg;
  cfg.seed = 6;
  const auto r = mock_generate(cfg, 1)[0];
  const auto& text = r.raw_response->text;
  CHECK(text.front() == '{');
  CHECK(text.find("'negative': ") != std::string::npos);
  CHECK(text.find("'positive': ") != std::string::npos);
  CHECK(r.text == "mock example 0");
}

TEST_CASE("malformed rate produces unparsed prose") {
  MockLLMConfig cfg;
  cfg.seed = 7;
  cfg.malformed_rate = 1.0;
  for (const auto& r : mock_generate(cfg, 50)) CHECK(r.parse.status != ParseStatus::Parsed);
  cfg.malformed_rate = 0.3;
  const auto rs = mock_generate(cfg, 2000);
  const auto bad = std::count_if(rs.begin(), rs.end(), [](const auto& r) { return r.parse.status != ParseStatus::Parsed; });
  CHECK(static_cast<double>(bad) / 2000.0 == doctest::Approx(0.3).epsilon(0.15));
}

TEST_CASE("validation fraction assigns the leading records") {
  MockLLMConfig cfg;
  cfg.validation_fraction = 0.25;
  const auto rs = mock_generate(cfg, 8);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(rs[i].split == (i < 2 ? dataset::Split::Validation : dataset::Split::Test));
  }
}

TEST_CASE("mock config validation") {
  const auto bad = [](auto mutate) {
    MockLLMConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(mock_generate(cfg, 10), Error);
  };
  bad([](MockLLMConfig& c) { c.decimals = 3; });
  bad([](MockLLMConfig& c) { c.sharpness_beta = 0.0; });
  bad([](MockLLMConfig& c) { c.malformed_rate = 1.5; });
  bad([](MockLLMConfig& c) { c.latent_accuracy = 0.5; });
  bad([](MockLLMConfig& c) { c.n_classes = 1; });
  bad([](MockLLMConfig& c) { c.labels = {"a", "b", "c"}; });
  MockLLMConfig ok;
  CHECK_THROWS_AS(mock_generate(ok, 0), Error);
}
