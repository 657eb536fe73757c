#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mznav/agents/dqn.hpp"
#include "mznav/agents/ppo.hpp"
#include "mznav/depth/gan.hpp"
#include "mznav/env/env.hpp"
#include "mznav/harness/config.hpp"
#include "mznav/sim/map.hpp"

namespace mznav::harness {

// Everything a run owns: map, optional depth model, training envs and the
// agent for cfg.algo. Build order fixes env seeds (worker i gets a stream
// derived from the run seed and i).
struct Session {
  RunConfig cfg;
  sim::GridMap map;
  std::optional<depth::DepthModel> depth_model;
  std::unique_ptr<depth::PredictorAdapter> predictor;
  std::vector<std::unique_ptr<env::Env>> envs;
  std::vector<std::unique_ptr<agents::EnvAdapter>> adapters;
  std::unique_ptr<agents::DqnAgent> dqn;
  std::unique_ptr<agents::PpoAgent> ppo;

  std::int64_t agent_step() const;
  std::int64_t agent_episodes() const;
};

// Conv trunk for the configured observation size: the 84x84 setting uses the
// standard Atari stack, 32x32 a slimmer desk-scale variant.
std::vector<nn::LayerSpec> conv_trunk(int obs_size);

std::unique_ptr<Session> build_session(const RunConfig& cfg);

// Checkpoint container. File layout: "MZNV", version u16, u32 section count,
// then name + length-prefixed blob per section (config echo, agent state,
// metrics text), all little-endian.
struct Checkpoint {
  std::string config_text;
  std::vector<char> agent_blob;
  std::string metrics_text;
};

std::vector<char> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::vector<char>& buf);
void write_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

struct EvalResult {
  double mean = 0;
  double stddev = 0;  // sample std over episodes
  std::vector<double> per_episode;
};

// The evaluation protocol: anchor spawn, deterministic policy (greedy /
// distribution mode), undiscounted return, cfg.eval_episodes episodes.
// Throws NumericError if a return leaves [-1, 1.15 * horizon].
EvalResult run_eval(Session& s);

// Same protocol but uniformly random actions; the untrained baseline.
EvalResult run_eval_random(Session& s, std::uint64_t rng_seed);

struct TrainResult {
  std::string metrics_path;
  std::string ckpt_path;
  std::string final_ckpt_path;
  EvalResult last_eval;
};

// Trains to cfg.total_steps with an eval + metrics row + checkpoint at every
// eval-period boundary (the on-policy learner may overshoot a boundary by up
// to one horizon; rows carry the actual step). `resume` continues from a
// decoded checkpoint; its metrics rows are preserved byte for byte.
TrainResult run_train(const RunConfig& cfg, const std::string& out_dir,
                      const Checkpoint* resume = nullptr);

// One anchor-spawn episode capped at `steps`: NNNN_gray.pgm plus
// NNNN_depth.pgm per step (the pre-step view) and traj.txt lines
// "x y theta reward". agent_ckpt may be null for the untrained policy.
struct RenderResult {
  int steps = 0;
  double episode_reward = 0;
};
RenderResult run_render(const RunConfig& cfg, const Checkpoint* agent_ckpt,
                        const std::string& out_dir, int steps);

// Aligns eval rows across per-seed metrics files and writes
// "step,n,mean,std,ci95" (std/ci empty for a single file). Steps must match
// exactly; mismatches raise ConfigError naming the offending steps.
void aggregate_metrics(const std::vector<std::string>& inputs,
                       const std::string& out_path);

}  // namespace mznav::harness
