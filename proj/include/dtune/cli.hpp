#ifndef DTUNE_CLI_HPP_
#define DTUNE_CLI_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtune/agent.hpp"
#include "dtune/envs.hpp"
#include "dtune/train.hpp"

namespace dtune::cli {

using nlohmann::json;

enum class Mode { kFinetune, kPretrainOnly };

struct DatasetSpec {
  // "bandit-concealed" or a behavior name (random | scripted-suboptimal | oracle).
  std::string generator = "random";
  long n_steps = 10000;
  // Load from this file instead of generating (same file for every seed).
  std::string path;
  envs::BanditDatasetConfig bandit;
};

// Fully resolved experiment configuration.
struct RunConfig {
  std::string preset = "custom";
  std::string algo = "td3_odt";
  Mode mode = Mode::kFinetune;
  std::string env = "bandit";
  int reward_delay = 1;
  DatasetSpec dataset;
  agent::AgentConfig agent;
  train::TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "runs";
  bool save_checkpoints = false;
  std::string eval_checkpoint;

  void validate() const;
};

// Names understood by resolve().
const std::vector<std::string>& preset_names();
const std::vector<std::string>& algo_names();

// User-facing inputs before resolution.
struct Request {
  json user = json::object();           // config file contents
  std::vector<std::string> overrides;   // key=value, dotted paths
  std::string preset;                   // --preset
  std::vector<std::uint64_t> seeds;     // --seed (repeatable)
  std::string out;                      // --out
};

// Applies `key=value` onto a JSON object. The value is parsed as JSON when
// possible, otherwise taken as a string.
void apply_override(json& j, const std::string& assignment);

// Preset defaults, then the algorithm's switches, then user fields, then
// overrides. Returns one fully expanded config per sweep point.
std::vector<json> resolve(const Request& req);

// Strict conversion; unknown keys and invalid values throw.
RunConfig from_json(const json& resolved);
json to_json(const RunConfig& cfg);

// Dataset for one seed as configured.
envs::OfflineDataset make_dataset(const RunConfig& cfg, std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  double initial = 0.0;  // evaluation before online finetuning
  double final = 0.0;
};

struct SummaryRow {
  std::string label;
  std::string algo;
  std::vector<SeedResult> seeds;
  double final_mean = 0.0, final_std = 0.0, delta_mean = 0.0;

  // "final(+delta)" with one decimal.
  std::string formatted() const;
};

std::string summary_header();
std::string summary_line(const SummaryRow& row);

// Subcommands. Progress goes to `log`; the return value is the exit code.
int cmd_gen_data(const std::vector<json>& configs, std::ostream& log);
int cmd_run(const std::vector<json>& configs, std::ostream& log);
int cmd_theory(const std::vector<json>& configs, std::ostream& log);
int cmd_eval(const std::vector<json>& configs, std::ostream& log);

// Runs one config (all its seeds) into `dir`.
SummaryRow run_experiment(const RunConfig& cfg, const std::string& dir, const std::string& label,
                          std::ostream& log);

}  // namespace dtune::cli

#endif  // DTUNE_CLI_HPP_
