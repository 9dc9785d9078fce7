#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shiftlab/featurize.hpp"
#include "shiftlab/model.hpp"
#include "shiftlab/sim.hpp"

namespace shiftlab::run {

// Fully-resolved run configuration. Parsed strictly: unknown keys anywhere in
// the config raise ConfigError with the dotted path, so typos cannot silently
// fall back to defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir;  // optional; CLI --out and SHIFTLAB_OUT take precedence

  sim::SimConfig sim;

  std::vector<int> train_periods;  // period indices
  int retro_period = -1;
  int pro_period = -1;

  sim::PipelineConfig retro_pipeline;
  sim::PipelineConfig pro_pipeline;
  int settle_days = 30;  // retrospective extraction waits this long after period end

  feat::Options featurize;
  model::TrainConfig train;

  struct Evaluate {
    int n_replicates = 200;
    double threshold_percentile = 95.0;
    std::string threshold_reference = "retrospective";  // | "prospective" | "retro_replay"
  } evaluate;

  struct Gap {
    int n_replicates = 500;
  } gap;

  struct Swap {
    bool half_period = true;  // also run the interim (first-half) variant
  } swap;

  struct Drift {
    double alpha = 0.05;
  } drift;

  // Canonical serialization of the effective config (post-override); its hash
  // ties every artifact in the out dir to one configuration.
  std::string canonical_text;
};

struct CliOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // dotted key=value, applied before parsing
};

// Parse a config JSON text (strict). `overrides`/`seed` are applied to the
// JSON before validation, so overridden configs are checked the same way.
RunConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {},
                       std::optional<std::uint64_t> seed_override = std::nullopt);

RunConfig load_config(const CliOptions& opts);  // read file + parse_config

// Out-dir precedence: --out > config out_dir > SHIFTLAB_OUT > "out".
std::string resolve_out_dir(const RunConfig& cfg, const CliOptions& opts);

std::string config_hash(const RunConfig& cfg);

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate", "featurize", "train",    "score",
                                                 "evaluate", "gap",       "swap",     "drift",
                                                 "report"};
  return names;
}

// Execute one subcommand against the out dir: loads upstream artifacts,
// writes this stage's outputs, and updates manifest.json. Throws on failure
// (ConfigError when the out dir belongs to a different config/seed).
void execute(const std::string& command, const RunConfig& cfg, const std::string& out_dir);

// Map an exception to the CLI exit code: ConfigError 2, data/schema problems
// 3, I/O 4, anything else 1.
int exit_code_for(const std::exception& e);

}  // namespace shiftlab::run
