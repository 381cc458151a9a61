// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <regex>
#include <sstream>

#include "vcal/cli.hpp"
#include "vcal/metrics.hpp"
#include "vcal/tuner.hpp"

namespace fs = std::filesystem;
using namespace vcal;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("vcal_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run vcal_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

void write(const std::string& path, const std::string& content) {
  std::ofstream(path, std::ios::binary) << content;
}

std::string record_line(const std::string& text, const std::string& reply, const std::string& split = "test") {
  nlohmann::json j = {{"text", text}, {"gold_label", "positive"}, {"response_text", reply}, {"split", split}};
  return j.dump() + "\n";
}

}  // namespace

TEST_CASE("mock elicitation is byte-identical across runs") {
  TempDir dir;
  const auto a = vcal_run({"mock-gen", "--n", "1000", "--seed", "7", "-o", dir / "a.jsonl"});
  REQUIRE(a.code == 0);
  const auto b = vcal_run({"elicit", "--mock", "--n", "1000", "--seed", "7", "-o", dir / "b.jsonl"});
  REQUIRE(b.code == 0);
  const auto first = slurp(dir / "a.jsonl");
  CHECK(lines_of(first).size() == 1000);
  CHECK(first == slurp(dir / "b.jsonl"));
  REQUIRE(vcal_run({"mock-gen", "--n", "1000", "--seed", "7", "-o", dir / "a.jsonl"}).code == 0);
  CHECK(slurp(dir / "a.jsonl") == first);
  CHECK_FALSE(fs::exists(dir / "a.jsonl.partial"));
}

TEST_CASE("decimals flag controls response precision") {
  TempDir dir;
  REQUIRE(vcal_run({"mock-gen", "--n", "50", "--decimals", "2", "-o", dir / "d2.jsonl"}).code == 0);
  REQUIRE(vcal_run({"mock-gen", "--n", "50", "--decimals", "1", "-o", dir / "d1.jsonl"}).code == 0);
  const std::regex two(R"(\{'negative': \d\.\d\d, 'positive': \d\.\d\d\})");
  const std::regex one(R"(\{'negative': \d\.\d, 'positive': \d\.\d\})");
  for (const auto& line : lines_of(slurp(dir / "d2.jsonl"))) {
    CHECK(std::regex_match(nlohmann::json::parse(line).at("response_text").get<std::string>(), two));
  }
  for (const auto& line : lines_of(slurp(dir / "d1.jsonl"))) {
    CHECK(std::regex_match(nlohmann::json::parse(line).at("response_text").get<std::string>(), one));
  }
}

TEST_CASE("endpoint without credential exits with AuthError") {
  TempDir dir;
  write(dir / "in.jsonl", record_line("hello", "", "test"));
  ::unsetenv("VCAL_CLI_TEST_NO_KEY");
  const auto r = vcal_run({"elicit", "--endpoint", "http://127.0.0.1:1", "--model", "m", "--api-key-env",
                           "VCAL_CLI_TEST_NO_KEY", "-i", dir / "in.jsonl", "-o", dir / "out.jsonl"});
  CHECK(r.code != 0);
  CHECK(r.err.find("AuthError") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out.jsonl"));
}

TEST_CASE("elicit needs a source") {
  TempDir dir;
  const auto r = vcal_run({"elicit", "-o", dir / "x.jsonl"});
  CHECK(r.code != 0);
  CHECK(r.err.find("--mock") != std::string::npos);
}

TEST_CASE("calibrate: overconfident data, both modes, both objectives") {
  TempDir dir;
  REQUIRE(vcal_run({"mock-gen", "--n", "2000", "--seed", "11", "--beta", "3", "-o", dir / "m.jsonl"}).code == 0);

  auto r = vcal_run({"calibrate", "-i", dir / "m.jsonl", "-o", dir / "cal.jsonl", "--fit", dir / "fit.json"});
  REQUIRE(r.code == 0);
  const auto fit = tuner::fit_from_json(slurp(dir / "fit.json"));
  CHECK(fit.tau_star > 1.0);
  CHECK(fit.mode == tuner::CalibrationMode::InvertSoftmax);
  CHECK(fit.objective == tuner::Objective::NLL);
  for (const auto& line : lines_of(slurp(dir / "cal.jsonl"))) {
    CHECK(nlohmann::json::parse(line).at("calibrated_distribution").is_object());
  }

  r = vcal_run({"calibrate", "-i", dir / "m.jsonl", "-o", dir / "base.jsonl", "--fit", dir / "base.json", "--mode",
                "resoftmax-baseline"});
  REQUIRE(r.code == 0);
  CHECK(tuner::fit_from_json(slurp(dir / "base.json")).tau_star < 1.0);

  r = vcal_run({"calibrate", "-i", dir / "m.jsonl", "-o", dir / "ece.jsonl", "--fit", dir / "ece.json", "--objective",
                "ece"});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "ece.json")).at("objective") == "ece");

  // Deterministic.
  const auto before = slurp(dir / "cal.jsonl");
  REQUIRE(vcal_run({"calibrate", "-i", dir / "m.jsonl", "-o", dir / "cal.jsonl", "--fit", dir / "fit.json"}).code == 0);
  CHECK(slurp(dir / "cal.jsonl") == before);
}

TEST_CASE("calibrate reports dropped records and needs validation data") {
  TempDir dir;
  REQUIRE(vcal_run({"mock-gen", "--n", "400", "--malformed-rate", "0.2", "-o", dir / "m.jsonl"}).code == 0);
  auto r = vcal_run({"calibrate", "-i", dir / "m.jsonl", "-o", dir / "c.jsonl", "--fit", dir / "f.json"});
  CHECK(r.code == 0);
  CHECK(r.err.find("dropped") != std::string::npos);

  REQUIRE(vcal_run({"mock-gen", "--n", "40", "--val-fraction", "0", "-o", dir / "t.jsonl"}).code == 0);
  r = vcal_run({"calibrate", "-i", dir / "t.jsonl", "-o", dir / "tc.jsonl", "--fit", dir / "tf.json"});
  CHECK(r.code != 0);
  CHECK(r.err.find("EmptyDataset") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "tc.jsonl"));
  CHECK_FALSE(fs::exists(dir / "tf.json"));
}

TEST_CASE("report: side-by-side metrics, plot data, round-trip") {
  TempDir dir;
  REQUIRE(vcal_run({"mock-gen", "--n", "3000", "--seed", "12", "--beta", "3", "-o", dir / "m.jsonl"}).code == 0);
  REQUIRE(vcal_run({"calibrate", "-i", dir / "m.jsonl", "-o", dir / "c.jsonl", "--fit", dir / "f.json"}).code == 0);
  const auto r = vcal_run({"report", "-i", dir / "c.jsonl", "--out-dir", dir / "rep", "--svg"});
  REQUIRE(r.code == 0);
  for (const char* kind : {"uncalibrated", "calibrated"}) {
    for (const char* stem : {"report_", "reliability_", "histogram_", "pr_"}) {
      CHECK(fs::exists(dir / (std::string("rep/") + stem + kind + ".csv")));
    }
    CHECK(fs::exists(dir / (std::string("rep/reliability_") + kind + ".svg")));
  }
  const auto uncal = metrics::report_from_json(slurp(dir / "rep/report_uncalibrated.json"));
  const auto cal = metrics::report_from_json(slurp(dir / "rep/report_calibrated.json"));
  CHECK(metrics::report_from_csv(slurp(dir / "rep/report_calibrated.csv")) == cal);
  CHECK(uncal.n == 1500);
  CHECK(cal.ece < uncal.ece);
  CHECK(cal.accuracy == uncal.accuracy);
  CHECK(slurp(dir / "rep/reliability_calibrated.svg").rfind("<svg", 0) == 0);
  CHECK(lines_of(slurp(dir / "rep/reliability_calibrated.csv")).size() == 11);
  CHECK(lines_of(slurp(dir / "rep/histogram_uncalibrated.csv"))[0] == "bin_index,lower,upper,count,fraction");
}

TEST_CASE("report: one-decimal PR file has at most 11 thresholds") {
  TempDir dir;
  REQUIRE(vcal_run({"mock-gen", "--n", "2000", "--decimals", "1", "-o", dir / "m.jsonl"}).code == 0);
  REQUIRE(vcal_run({"report", "-i", dir / "m.jsonl", "--out-dir", dir / "rep", "--split", "all"}).code == 0);
  const auto rows = lines_of(slurp(dir / "rep/pr_uncalibrated.csv"));
  CHECK(rows[0] == "threshold,precision,recall");
  CHECK(rows.size() - 1 <= 11);
  CHECK_FALSE(fs::exists(dir / "rep/report_calibrated.json"));
}

TEST_CASE("report on an empty split fails") {
  TempDir dir;
  REQUIRE(vcal_run({"mock-gen", "--n", "20", "--val-fraction", "1", "-o", dir / "m.jsonl"}).code == 0);
  const auto r = vcal_run({"report", "-i", dir / "m.jsonl", "--out-dir", dir / "rep"});
  CHECK(r.code != 0);
  CHECK(r.err.find("EmptyDataset") != std::string::npos);
}

TEST_CASE("aggregate keeps shared texts") {
  TempDir dir;
  const std::string good = "{'negative': 0.1, 'positive': 0.9}";
  write(dir / "a.jsonl", record_line("t1", good) + record_line("t2", good) + record_line("t3", good));
  write(dir / "b.jsonl", record_line("t2", good) + record_line("t3", good) + record_line("t4", good));
  const auto r = vcal_run({"aggregate", "--inputs", dir / "a.jsonl", dir / "b.jsonl", "--out-dir", dir / "agg"});
  CHECK(r.code == 0);
  CHECK(lines_of(slurp(dir / "agg/a.intersected.jsonl")).size() == 2);
  CHECK(lines_of(slurp(dir / "agg/b.intersected.jsonl")).size() == 2);
}

TEST_CASE("aggregate on disjoint files warns and exits nonzero") {
  TempDir dir;
  const std::string good = "{'negative': 0.1, 'positive': 0.9}";
  write(dir / "a.jsonl", record_line("t1", good));
  write(dir / "b.jsonl", record_line("t2", good));
  const auto r = vcal_run({"aggregate", "--inputs", dir / "a.jsonl", dir / "b.jsonl", "--out-dir", dir / "agg"});
  CHECK(r.code != 0);
  CHECK(r.err.find("EmptyIntersection") != std::string::npos);
  CHECK(slurp(dir / "agg/a.intersected.jsonl").empty());
  CHECK(fs::exists(dir / "agg/b.intersected.jsonl"));
  CHECK(vcal_run({"aggregate", "--inputs", dir / "a.jsonl", "--out-dir", dir / "agg"}).code != 0);
}

TEST_CASE("parse subcommand re-parses against another label set") {
  TempDir dir;
  write(dir / "in.jsonl", record_line("t1", "{'no': 0.2, 'yes': 0.8}").replace(0, 0, ""));
  const auto r = vcal_run({"parse", "--labels", "no,yes", "-i", dir / "in.jsonl", "-o", dir / "out.jsonl"});
  // gold label "positive" is not in {no, yes}
  CHECK(r.code != 0);
  CHECK(r.err.find("UnknownGoldLabel") != std::string::npos);

  nlohmann::json j = {{"text", "t1"}, {"gold_label", "yes"}, {"response_text", "{'no': 0.2, 'yes': 0.8}"}, {"split", "test"}};
  write(dir / "in.jsonl", j.dump() + "\n");
  REQUIRE(vcal_run({"parse", "--labels", "no,yes", "-i", dir / "in.jsonl", "-o", dir / "out.jsonl"}).code == 0);
  const auto out = nlohmann::json::parse(lines_of(slurp(dir / "out.jsonl"))[0]);
  CHECK(out.at("status") == "parsed");
  CHECK(out.at("parsed_distribution").at("yes") == 0.8);
}

TEST_CASE("config file sets defaults and flags override it") {
  TempDir dir;
  write(dir / "cfg.json", R"({"n": 30, "seed": 5, "decimals": 1, "task": "emotion", "latent_accuracy": 0.5})");
  REQUIRE(vcal_run({"mock-gen", "--config", dir / "cfg.json", "-o", dir / "a.jsonl"}).code == 0);
  const auto rows = lines_of(slurp(dir / "a.jsonl"));
  CHECK(rows.size() == 30);
  CHECK(nlohmann::json::parse(rows[0]).at("parsed_distribution").size() == 6);
  REQUIRE(vcal_run({"mock-gen", "--config", dir / "cfg.json", "--n", "12", "-o", dir / "b.jsonl"}).code == 0);
  CHECK(lines_of(slurp(dir / "b.jsonl")).size() == 12);

  write(dir / "bad.json", R"({"n": 30, "colour": "blue"})");
  const auto r = vcal_run({"mock-gen", "--config", dir / "bad.json", "-o", dir / "c.jsonl"});
  CHECK(r.code != 0);
  CHECK(r.err.find("colour") != std::string::npos);
}

TEST_CASE("RunConfig validation happens before any work") {
  TempDir dir;
  CHECK(vcal_run({"mock-gen", "--decimals", "3", "-o", dir / "x.jsonl"}).code != 0);
  CHECK(vcal_run({"mock-gen", "--task", "sst2", "-o", dir / "x.jsonl"}).code != 0);
  CHECK(vcal_run({"calibrate", "--mode", "bogus", "-i", "x", "-o", "y", "--fit", "z"}).code != 0);
  CHECK_FALSE(fs::exists(dir / "x.jsonl"));

  cli::RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau_min = 5;
  c.tau_max = 1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("usage errors") {
  CHECK(vcal_run({}).code == 2);
  CHECK(vcal_run({"frobnicate"}).code == 2);
  CHECK(vcal_run({"mock-gen", "--n", "many"}).code == 2);
  const auto help = vcal_run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("calibrate") != std::string::npos);
}
