#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mznav/agents/dqn.hpp"
#include "mznav/agents/ppo.hpp"
#include "mznav/depth/gan.hpp"

namespace mznav::harness {

// One flat config drives every subcommand. File format: `key = value` lines,
// `#` comments, dotted prefixes for sections. Parsing rejects unknown keys;
// later assignments (including --set overrides) win.
struct RunConfig {
  std::string map = "maps/circuit2.map";
  std::string algo = "ppo";          // dqn | ppo
  std::string action_space = "disc5";
  std::string sensor = "gray";       // gray | depth | depth_pred | fused
  int obs_size = 84;                 // 84 | 32
  std::uint64_t seed = 1;
  std::int64_t total_steps = 150000;
  std::int64_t eval_period = 10000;
  int eval_episodes = 12;
  int workers = 1;                   // ppo env fan-out; dqn requires 1

  int episode_horizon = 2000;
  std::string cd_mode = "mean";      // mean | sum

  std::string depth_model;           // required for depth_pred / fused
  int depth_pairs = 1024;
  std::string depth_policy = "random_safe";  // random_safe | scan

  agents::DqnConfig dqn;
  agents::PpoConfig ppo;
  depth::GanTrainConfig gan;

  RunConfig() {
    // 0 marks "derive from total_steps" (10% decay, full-run beta anneal);
    // resolve_auto_fields fills them, and the canonical echo stores the
    // resolved values so resumed runs never re-derive.
    dqn.eps_decay_steps = 0;
    dqn.per_beta_steps = 0;
  }
};

// Parses config text / file onto defaults. Throws ConfigError on unknown
// keys, malformed lines, or invalid values.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Applies `key=value` override strings (the --set flag) on top of cfg.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets);

// Fills the auto fields and validates cross-field constraints (dqn is
// discrete-only, fused/depth_pred need a model path, ...).
void resolve_auto_fields(RunConfig& cfg);
void validate(const RunConfig& cfg);

// Full key = value dump in fixed key order; parse(canonical(cfg)) == cfg and
// canonical(parse(t)) is idempotent.
std::string canonical_config_text(const RunConfig& cfg);

// parse + overrides + resolve + validate, the one-stop CLI entry.
RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& sets);

}  // namespace mznav::harness
