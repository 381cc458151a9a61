// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Getting verbalized distributions out of a model.
 *
 * Two sources feed the same record format:
 *  - a chat-completion endpoint, prompted with one of the built-in
 *    templates and retried (optionally with a mutated instruction line)
 *    while the reply does not parse;
 *  - a seeded synthetic model whose latent logits have a known calibrated
 *    posterior, sharpened by `sharpness_beta`, rounded to 1 or 2 decimals
 *    and written out in the `{'label': 0.99, ...}` style.
 *
 * Wire format (POST {base_url}{path}):
 *   request  {"model": str, "messages": [{"role": str, "content": str}...],
 *             "temperature": num, "max_tokens": int}
 *   response {"choices": [{"message": {"content": str}}]}
 *            ({"choices": [{"text": str}]} is accepted as well)
 * The bearer token is read from the environment variable named in the
 * endpoint config; it never appears in config files or flags.
 */

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcal/dataset.hpp"
#include "vcal/response_parser.hpp"

namespace vcal::elicitation {

enum class PromptLayout { SingleUserMessage, SystemPlusUser };

struct PromptTemplate {
  std::string task_name;
  PromptLayout layout = PromptLayout::SingleUserMessage;
  /// System message for SystemPlusUser layouts; empty otherwise.
  std::string system_text;
  /// Must contain exactly one `$text` placeholder.
  std::string template_text;
  std::string label_list_rendered;
};

inline constexpr std::string_view kPlaceholder = "$text";

/// Template families: "claude-v2" and "mixtral" (single user message) and
/// "claude-v3" (system + user). Tasks: "imdb", "emotion", "massive".
PromptTemplate builtin_template(std::string_view family, std::string_view task);

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct RenderedPrompt {
  std::vector<ChatMessage> messages;
};

/// Substitutes the input text for the placeholder. Throws MissingPlaceholder
/// unless the template holds exactly one placeholder, InvalidConfig on empty text.
RenderedPrompt render_prompt(const PromptTemplate& tmpl, std::string_view text);

/// "no other words" -> "remove other words" in every message.
RenderedPrompt mutate_instruction(RenderedPrompt prompt);

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 256;
};

std::string request_to_json(const ChatRequest& request);
ChatRequest request_from_json(std::string_view body);
std::string reply_to_json(std::string_view content);
/// Extracts the reply text; throws TransportError on an unexpected shape.
std::string reply_from_json(std::string_view body);

/// Anything that turns a chat request into reply text. Implementations must
/// tolerate concurrent calls.
class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  /// Throws TransportError or AuthError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct EndpointConfig {
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "VCAL_API_KEY";
  double timeout_seconds = 60.0;
  std::size_t concurrency = 4;
  int max_tokens = 256;

  void validate() const;
};

/// Reads the EndpointConfig field names; missing keys keep their defaults.
/// The result is validated.
EndpointConfig endpoint_config_from_json(std::string_view text);

class HttpChatEndpoint final : public ChatEndpoint {
 public:
  /// Reads the credential now; throws AuthError if the variable is unset or empty.
  explicit HttpChatEndpoint(EndpointConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  EndpointConfig config_;
  std::string api_key_;
};

struct RetryPolicy {
  std::size_t max_attempts = 3;
  bool mutate_on_retry = true;

  void validate() const;
};

struct GenerationConfig {
  std::string model;
  double token_temperature = 0.0;
  int max_tokens = 256;
};

struct Elicitation {
  RawResponse response;
  std::size_t attempts = 0;
};

/// Sends the rendered prompt, retrying while the reply does not parse and
/// attempts remain. Transport failures also consume attempts; the last one
/// is rethrown. AuthError is never retried. The final reply is returned
/// whether or not it parses.
Elicitation elicit(ChatEndpoint& endpoint, const PromptTemplate& tmpl, std::string_view text,
                   std::span<const std::string> labels, const RetryPolicy& policy,
                   const GenerationConfig& gen);

/// `elicit` over many texts with at most `max_in_flight` concurrent requests.
/// Results come back in input order; the first failure (in input order) is
/// rethrown after all workers finish.
std::vector<Elicitation> elicit_batch(ChatEndpoint& endpoint, const PromptTemplate& tmpl,
                                      std::span<const std::string> texts,
                                      std::span<const std::string> labels,
                                      const RetryPolicy& policy, const GenerationConfig& gen,
                                      std::size_t max_in_flight = 4);

// ---------------------------------------------------------------------------
// Synthetic model

struct MockLLMConfig {
  std::size_t n_classes = 2;
  /// Multiplier on the latent logits; > 1 is overconfident.
  double sharpness_beta = 1.0;
  int decimals = 2;
  double malformed_rate = 0.0;
  double sum_noise_sigma = 0.0;
  /// Probability that the latent argmax is the gold label, in (1/K, 1].
  double latent_accuracy = 0.8;
  std::uint64_t seed = 0;
  /// Leading share of records assigned to the validation split.
  double validation_fraction = 0.5;
  /// Label names; defaults to a built-in task of matching size or class_<i>.
  std::vector<std::string> labels;
  std::string model_id = "mock-llm";
  double token_temperature = 0.0;

  void validate() const;
  std::vector<std::string> resolved_labels() const;
};

struct MockDraw {
  std::size_t gold = 0;
  /// Latent logits; softmax of these is the calibrated posterior.
  std::vector<double> latent_logits;
  /// Values written into the response (after rounding, before any parse).
  std::vector<double> verbalized;
  bool malformed = false;
};

struct MockDataset {
  std::vector<dataset::PredictionRecord> records;
  std::vector<MockDraw> draws;
};

/// Separation of the gold label's score mean that yields the requested
/// latent argmax accuracy for K classes.
double latent_mean_for_accuracy(std::size_t n_classes, double accuracy);

MockDataset mock_generate_detailed(const MockLLMConfig& cfg, std::size_t n_records);
std::vector<dataset::PredictionRecord> mock_generate(const MockLLMConfig& cfg,
                                                     std::size_t n_records);

}  // namespace vcal::elicitation
