// SPDX-License-Identifier: Apache-2.0
#include "vcal/response_parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "vcal/error.hpp"

namespace vcal {

namespace {

constexpr std::array<std::string_view, 16> kRefusalPhrases = {
    "i'm sorry",        "i am sorry",        "sorry, but",       "i apologize",
    "i apologise",      "i cannot",          "i can't",          "i can not",
    "i won't",          "i will not",        "unable to",        "not able to",
    "not comfortable",  "i must decline",    "as an ai",         "i'd rather not",
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Trims whitespace and any quote characters around a key or value, which
// also absorbs unbalanced quotes such as `label' or label'.
std::string_view strip_quotes(std::string_view s) {
  constexpr std::string_view kQuotes = "'\"`";
  s = trim(s);
  while (!s.empty() && kQuotes.find(s.front()) != std::string_view::npos) s.remove_prefix(1);
  while (!s.empty() && kQuotes.find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  return trim(s);
}

std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  // Typographic apostrophe (U+2019) to ASCII so "I’m sorry" matches.
  for (std::size_t pos = 0; (pos = out.find("\xE2\x80\x99", pos)) != std::string::npos;) {
    out.replace(pos, 3, "'");
  }
  return out;
}

bool looks_like_refusal(std::string_view text) {
  const auto lower = lowercase_ascii(text);
  return std::any_of(kRefusalPhrases.begin(), kRefusalPhrases.end(),
                     [&](std::string_view p) { return lower.find(p) != std::string::npos; });
}

// Body of the last innermost {...} block that contains a colon.
std::optional<std::string_view> last_map_body(std::string_view text) {
  struct Open {
    std::size_t pos;
    bool has_child;
  };
  std::vector<Open> stack;
  std::optional<std::string_view> found;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '{') {
      if (!stack.empty()) stack.back().has_child = true;
      stack.push_back({i, false});
    } else if (text[i] == '}' && !stack.empty()) {
      const Open open = stack.back();
      stack.pop_back();
      if (open.has_child) continue;
      const auto body = text.substr(open.pos + 1, i - open.pos - 1);
      if (body.find(':') != std::string_view::npos) found = body;
    }
  }
  return found;
}

std::vector<std::string_view> split_entries(std::string_view body) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= body.size()) {
    const auto pos = body.find(',', start);
    const auto end = pos == std::string_view::npos ? body.size() : pos;
    out.push_back(body.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool is_elision(std::string_view entry) {
  return entry.empty() || entry == "..." || entry == "\xE2\x80\xA6";
}

ParseOutcome failed(ParseStatus status) { return ParseOutcome{status, std::nullopt, std::nullopt}; }

}  // namespace

std::string_view to_string(ParseStatus status) noexcept {
  switch (status) {
    case ParseStatus::Parsed: return "parsed";
    case ParseStatus::Refused: return "refused";
    case ParseStatus::Malformed: return "malformed";
    case ParseStatus::UnknownLabels: return "unknown_labels";
    case ParseStatus::Empty: return "empty";
  }
  return "empty";
}

ParseStatus parse_status(std::string_view s) {
  for (auto st : {ParseStatus::Parsed, ParseStatus::Refused, ParseStatus::Malformed,
                  ParseStatus::UnknownLabels, ParseStatus::Empty}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::SchemaError, "unknown parse status '" + std::string(s) + "'");
}

std::string canonicalize_label(std::string_view s) {
  s = trim(s);
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back('_');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

ParseOutcome parse_response(std::string_view text, std::span<const std::string> expected_labels) {
  if (expected_labels.empty()) throw Error(ErrorCode::InvalidConfig, "no expected labels");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < expected_labels.size(); ++i) {
    if (!index.emplace(canonicalize_label(expected_labels[i]), i).second) {
      throw Error(ErrorCode::InvalidConfig,
                  "expected labels collide after canonicalization: " + expected_labels[i]);
    }
  }

  if (trim(text).empty()) return failed(ParseStatus::Empty);
  const auto body = last_map_body(text);
  if (!body) {
    return failed(looks_like_refusal(text) ? ParseStatus::Refused : ParseStatus::Malformed);
  }

  std::vector<double> values(expected_labels.size(), 0.0);
  std::vector<bool> seen(expected_labels.size(), false);
  bool unknown = false;
  std::size_t entries = 0;
  for (auto entry : split_entries(*body)) {
    entry = trim(entry);
    if (is_elision(entry)) continue;
    const auto colon = entry.find(':');
    if (colon == std::string_view::npos) return failed(ParseStatus::Malformed);
    const auto key = canonicalize_label(strip_quotes(entry.substr(0, colon)));
    const auto value = parse_number(strip_quotes(entry.substr(colon + 1)));
    if (!value || *value < 0.0 || key.empty()) return failed(ParseStatus::Malformed);
    ++entries;
    const auto it = index.find(key);
    if (it == index.end()) {
      unknown = true;
      continue;
    }
    if (seen[it->second]) return failed(ParseStatus::Malformed);
    seen[it->second] = true;
    values[it->second] = *value;
  }
  if (entries == 0) return failed(ParseStatus::Malformed);
  if (unknown) return failed(ParseStatus::UnknownLabels);

  ProbVector dist{std::vector<std::string>(expected_labels.begin(), expected_labels.end()),
                  std::move(values)};
  const double sum = dist.sum();
  if (!(sum > 0.0)) return failed(ParseStatus::Malformed);
  return ParseOutcome{ParseStatus::Parsed, std::move(dist), sum};
}

ParseOutcome parse_response(const RawResponse& resp, std::span<const std::string> expected_labels) {
  return parse_response(resp.text, expected_labels);
}

}  // namespace vcal
