// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vcal/core.hpp"
#include "vcal/dataset.hpp"
#include "vcal/elicitation.hpp"
#include "vcal/tuner.hpp"

namespace vcal::cli {

/// Every knob a subcommand can read. Defaults apply first, then the JSON
/// config file (--config), then explicit command-line flags.
struct RunConfig {
  // task
  std::string task = "imdb";
  std::vector<std::string> labels;  // overrides `task` when non-empty
  std::optional<std::string> positive_label;

  // files
  std::filesystem::path input;
  std::vector<std::filesystem::path> inputs;  // aggregate
  std::filesystem::path output;
  std::filesystem::path fit_path;
  std::filesystem::path out_dir;

  // calibration
  std::size_t m_bins = metrics::kDefaultBins;
  tuner::Objective objective = tuner::Objective::NLL;
  tuner::CalibrationMode mode = tuner::CalibrationMode::InvertSoftmax;
  OffsetRule c_rule = MeanOffset{};
  double tau_min = 0.05;
  double tau_max = 10.0;
  std::size_t grid_points = 400;
  bool refine = true;

  // report
  std::string report_split = "test";  // test | validation | all
  bool svg = false;

  // mock generator
  bool mock = false;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  int decimals = 2;
  double beta = 1.0;
  double latent_accuracy = 0.8;
  double malformed_rate = 0.0;
  double sum_noise = 0.0;
  double validation_fraction = 0.5;
  std::string model_id = "mock-llm";
  double token_temperature = 0.0;

  // endpoint
  std::string endpoint;  // base URL
  std::string endpoint_path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "VCAL_API_KEY";
  double timeout_seconds = 60.0;
  std::size_t concurrency = 4;
  int max_tokens = 256;
  std::string template_family = "claude-v2";
  std::size_t max_attempts = 3;
  bool mutate_on_retry = true;

  dataset::TaskSpec task_spec() const;
  tuner::SearchConfig search() const;
  /// Range and consistency checks; throws InvalidConfig.
  void validate() const;
};

/// Applies the keys present in a JSON object (same names as the fields
/// above) onto `config`. Throws InvalidConfig on unknown keys or bad types.
void merge_config_json(RunConfig& config, const std::string& json_text);

/// Entry point shared by the `vcal` binary and the tests. Returns the exit
/// code: 0 iff the requested artifacts were fully written.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_elicit(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_parse(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_calibrate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_aggregate(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace vcal::cli
