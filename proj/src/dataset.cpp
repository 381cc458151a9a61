// SPDX-License-Identifier: Apache-2.0
#include "vcal/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <unordered_set>

#include "vcal/error.hpp"

namespace vcal::dataset {

namespace {

using ojson = nlohmann::ordered_json;

const std::vector<std::string>& massive_labels() {
  static const std::vector<std::string> labels = {
      "datetime_query",  "iot_hue_lightchange", "transport_ticket",  "takeaway_query",
      "qa_stock",        "general_greet",       "recommendation_events", "music_dislikeness",
      "iot_wemo_off",    "cooking_recipe",      "qa_currency",       "transport_traffic",
      "general_quirky",  "weather_query",       "audio_volume_up",   "email_addcontact",
      "takeaway_order",  "email_querycontact",  "iot_hue_lightup",   "recommendation_locations",
      "play_audiobook",  "lists_createoradd",   "news_query",        "alarm_query",
      "iot_wemo_on",     "general_joke",        "qa_definition",     "social_query",
      "music_settings",  "audio_volume_other",  "calendar_remove",   "iot_hue_lightdim",
      "calendar_query",  "email_sendemail",     "iot_cleaning",      "audio_volume_down",
      "play_radio",      "cooking_query",       "datetime_convert",  "qa_maths",
      "iot_hue_lightoff", "iot_hue_lighton",    "transport_query",   "music_likeness",
      "email_query",     "play_music",          "audio_volume_mute", "social_post",
      "alarm_set",       "qa_factoid",          "calendar_set",      "play_game",
      "alarm_remove",    "lists_remove",        "transport_taxi",    "recommendation_movies",
      "iot_coffee",      "music_query",         "play_podcasts",     "lists_query",
  };
  return labels;
}

Split parse_split(std::string_view s, std::size_t line) {
  if (s == "validation" || s == "val") return Split::Validation;
  if (s == "test") return Split::Test;
  throw Error(ErrorCode::SchemaError, "split must be 'validation' or 'test', got '" +
                                          std::string(s) + "'",
              line);
}

std::string require_string(const ojson& j, const char* field, std::size_t line) {
  const auto it = j.find(field);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorCode::SchemaError, std::string("missing string field '") + field + "'", line);
  }
  return it->get<std::string>();
}

ojson distribution_json(const ProbVector& p) {
  ojson out = ojson::object();
  for (std::size_t i = 0; i < p.size(); ++i) out[p.labels[i]] = p.values[i];
  return out;
}

ProbVector distribution_from_json(const ojson& j, const TaskSpec& task, std::size_t line) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "distribution must be an object", line);
  ProbVector p{task.labels, std::vector<double>(task.labels.size(), 0.0)};
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find(task.labels.begin(), task.labels.end(), key);
    if (it == task.labels.end() || !value.is_number()) {
      throw Error(ErrorCode::SchemaError, "bad distribution entry '" + key + "'", line);
    }
    p.values[static_cast<std::size_t>(it - task.labels.begin())] = value.get<double>();
  }
  return p;
}

std::string match_gold(const std::string& gold, const TaskSpec& task, std::size_t line) {
  if (std::find(task.labels.begin(), task.labels.end(), gold) != task.labels.end()) return gold;
  const auto canon = canonicalize_label(gold);
  for (const auto& label : task.labels) {
    if (canonicalize_label(label) == canon) return label;
  }
  throw Error(ErrorCode::UnknownGoldLabel, "gold label '" + gold + "' not in task labels", line);
}

PredictionRecord record_from_json(const ojson& j, const TaskSpec& task, std::size_t line) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "record must be a JSON object", line);
  PredictionRecord r;
  r.text = require_string(j, "text", line);
  if (r.text.empty()) throw Error(ErrorCode::SchemaError, "empty text", line);
  r.gold_label = match_gold(require_string(j, "gold_label", line), task, line);
  r.split = parse_split(require_string(j, "split", line), line);

  const auto resp = j.find("response_text");
  if (resp != j.end() && !resp->is_null()) {
    if (!resp->is_string()) throw Error(ErrorCode::SchemaError, "response_text must be a string", line);
    RawResponse raw;
    raw.text = resp->get<std::string>();
    raw.model_id = j.value("model_id", std::string{});
    const auto temp = j.find("token_temperature");
    if (temp != j.end() && !temp->is_null()) {
      if (!temp->is_number()) throw Error(ErrorCode::SchemaError, "token_temperature must be a number", line);
      raw.token_temperature = temp->get<double>();
    }
    r.parse = parse_response(raw, task.labels);
    r.raw_response = std::move(raw);
  }
  const auto cal = j.find("calibrated_distribution");
  if (cal != j.end() && !cal->is_null()) r.calibrated = distribution_from_json(*cal, task, line);
  return r;
}

}  // namespace

void TaskSpec::validate() const {
  if (labels.size() < 2) throw Error(ErrorCode::InvalidConfig, "task needs at least two labels");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(canonicalize_label(l)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate label '" + l + "'");
    }
  }
  if (positive_label &&
      std::find(labels.begin(), labels.end(), *positive_label) == labels.end()) {
    throw Error(ErrorCode::InvalidConfig, "positive label '" + *positive_label + "' not in labels");
  }
}

TaskSpec builtin_task(std::string_view name) {
  if (name == "imdb") return {"imdb", {"negative", "positive"}, "positive"};
  if (name == "emotion") {
    return {"emotion", {"sadness", "joy", "love", "anger", "fear", "surprise"}, std::nullopt};
  }
  if (name == "massive") return {"massive", massive_labels(), std::nullopt};
  throw Error(ErrorCode::InvalidConfig, "unknown task '" + std::string(name) + "'");
}

TaskSpec custom_task(std::string name, std::vector<std::string> labels) {
  TaskSpec t{std::move(name), std::move(labels), std::nullopt};
  if (t.labels.size() == 2) t.positive_label = t.labels[1];
  t.validate();
  return t;
}

std::string_view to_string(Split split) noexcept {
  return split == Split::Validation ? "validation" : "test";
}

std::vector<PredictionRecord> read_records(std::istream& in, const TaskSpec& task) {
  task.validate();
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const ojson::exception& e) {
      throw Error(ErrorCode::SchemaError, std::string("invalid JSON: ") + e.what(), line_no);
    }
    try {
      out.push_back(record_from_json(j, task, line_no));
    } catch (const ojson::exception& e) {
      throw Error(ErrorCode::SchemaError, e.what(), line_no);
    }
  }
  return out;
}

std::vector<PredictionRecord> load_records(const std::filesystem::path& path, const TaskSpec& task) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_records(in, task);
}

std::string record_to_json_line(const PredictionRecord& r) {
  ojson j;
  j["text"] = r.text;
  j["gold_label"] = r.gold_label;
  if (r.raw_response) {
    j["response_text"] = r.raw_response->text;
    j["model_id"] = r.raw_response->model_id;
    j["token_temperature"] = r.raw_response->token_temperature;
  } else {
    j["response_text"] = nullptr;
  }
  j["split"] = to_string(r.split);
  j["status"] = to_string(r.parse.status);
  j["parsed_distribution"] =
      r.parse.distribution ? distribution_json(*r.parse.distribution) : ojson(nullptr);
  j["raw_sum"] = r.parse.raw_sum ? ojson(*r.parse.raw_sum) : ojson(nullptr);
  j["calibrated_distribution"] = r.calibrated ? distribution_json(*r.calibrated) : ojson(nullptr);
  return j.dump();
}

void write_records(std::ostream& out, std::span<const PredictionRecord> records) {
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

void save_records(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_records(out, records);
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::size_t FilterResult::dropped_total() const noexcept {
  std::size_t n = 0;
  for (const auto& [status, count] : dropped) n += count;
  return n;
}

FilterResult filter_parsed(std::span<const PredictionRecord> records) {
  FilterResult out;
  for (const auto& r : records) {
    if (r.parse.status == ParseStatus::Parsed) {
      out.kept.push_back(r);
    } else {
      out.dropped[r.parse.status] += 1;
    }
  }
  return out;
}

IntersectionResult intersect_by_text(
    const std::map<std::string, std::vector<PredictionRecord>>& per_model) {
  if (per_model.size() < 2) {
    throw Error(ErrorCode::InvalidConfig, "intersection needs at least two models");
  }
  std::optional<std::set<std::string>> common;
  for (const auto& [model, records] : per_model) {
    std::set<std::string> texts;
    for (const auto& r : records) {
      if (r.parse.status == ParseStatus::Parsed) texts.insert(r.text);
    }
    if (!common) {
      common = std::move(texts);
      continue;
    }
    std::set<std::string> both;
    std::set_intersection(common->begin(), common->end(), texts.begin(), texts.end(),
                          std::inserter(both, both.end()));
    common = std::move(both);
  }

  IntersectionResult out;
  for (const auto& [model, records] : per_model) {
    auto& kept = out.per_model[model];
    std::unordered_set<std::string> taken;
    for (const auto& r : records) {
      if (r.parse.status != ParseStatus::Parsed || !common->contains(r.text)) continue;
      if (taken.insert(r.text).second) kept.push_back(r);
    }
  }
  out.empty = common->empty();
  return out;
}

std::vector<PredictionRecord> select_split(std::span<const PredictionRecord> records, Split split) {
  std::vector<PredictionRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const PredictionRecord& r) { return r.split == split; });
  return out;
}

std::vector<metrics::LabeledPrediction> predictions(std::span<const PredictionRecord> records,
                                                    Source source) {
  std::vector<metrics::LabeledPrediction> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (source == Source::Calibrated) {
      if (!r.calibrated) throw Error(ErrorCode::InvalidConfig, "record has no calibrated distribution");
      out.push_back({*r.calibrated, r.gold_label});
      continue;
    }
    if (!r.parse.distribution) throw Error(ErrorCode::InvalidConfig, "record was not parsed");
    out.push_back({source == Source::Parsed ? r.parse.distribution->normalized()
                                            : *r.parse.distribution,
                   r.gold_label});
  }
  return out;
}

std::vector<double> raw_sums(std::span<const PredictionRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.parse.raw_sum) out.push_back(*r.parse.raw_sum);
  }
  return out;
}

}  // namespace vcal::dataset
