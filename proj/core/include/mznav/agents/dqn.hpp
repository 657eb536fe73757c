#pragma once

#include <cstdint>
#include <vector>

#include "mznav/agents/agent_env.hpp"
#include "mznav/agents/replay.hpp"
#include "mznav/nn/adam.hpp"
#include "mznav/nn/layers.hpp"

namespace mznav::agents {

// Defaults follow the common baselines convention for this agent family.
struct DqnConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  int batch_size = 32;
  int target_sync = 1000;
  double eps_start = 1.0;
  double eps_end = 0.02;
  std::int64_t eps_decay_steps = 15000;  // harness sets 10% of the run
  std::int64_t learn_start = 1000;
  int train_freq = 4;
  bool double_q = true;
  bool dueling = true;
  ReplayConfig replay;
  double per_beta0 = 0.4;
  std::int64_t per_beta_steps = 150000;  // anneal to 1 over the full run
  bool mse = false;  // true restores the plain squared TD objective
  double grad_clip = 10.0;
};

// Bellman targets from explicit Q tables {B, A}. q_online is only read for
// the double-Q argmax.
std::vector<double> dqn_target_from_q(const nn::Tensor& q_target,
                                      const nn::Tensor& q_online,
                                      const std::vector<double>& rewards,
                                      const std::vector<std::uint8_t>& dones,
                                      double gamma, bool double_q);

// Same, but forwards both nets on next_states first.
std::vector<double> dqn_target(const nn::Network& online,
                               const nn::Network& target,
                               const nn::Tensor& next_states,
                               const std::vector<double>& rewards,
                               const std::vector<std::uint8_t>& dones,
                               double gamma, bool double_q);

struct DqnLossOut {
  double loss = 0;
  double q_mean = 0;  // mean Q(s, a) over the batch
  std::vector<double> abs_td;
  std::vector<nn::Tensor> grads;
};

// Weighted Huber (delta=1) over TD errors, or weighted squared error with
// mse=true. Targets y are treated as constants.
DqnLossOut dqn_loss(const nn::Network& online, const nn::Tensor& states,
                    const std::vector<int>& actions,
                    const std::vector<double>& y,
                    const std::vector<double>& weights, bool mse);

struct DqnMetrics {
  std::int64_t step = 0;
  std::int64_t episodes = 0;
  double train_reward = 0;  // mean return of episodes finished in the window
  double loss = 0;          // means over train iterations in the window
  double q_mean = 0;
  double epsilon = 0;
  int train_iterations = 0;
};

class DqnAgent {
 public:
  // trunk is the body of the network; the agent appends a dueling or plain
  // dense head of env->action_count() outputs per config.
  DqnAgent(AgentEnv* env, std::vector<nn::LayerSpec> trunk, DqnConfig cfg,
           std::uint64_t seed);

  // Runs exactly n environment steps (acting, storing, training, syncing).
  DqnMetrics advance(std::int64_t n);

  int greedy_action(const nn::Tensor& state) const;
  double epsilon_at(std::int64_t step) const;
  double beta_at(std::int64_t step) const;

  std::int64_t step() const { return step_; }
  std::int64_t episodes() const { return episodes_; }
  const nn::Network& online() const { return online_; }
  const nn::Network& target() const { return target_; }
  const PrioritizedReplay& replay() const { return replay_; }
  const DqnConfig& config() const { return cfg_; }

  void sync_target();

  void serialize(io::Writer& w) const;
  void deserialize(io::Reader& r);

 private:
  void train_iteration(DqnMetrics& m);

  AgentEnv* env_;
  DqnConfig cfg_;
  nn::Network online_;
  nn::Network target_;
  nn::AdamState adam_;
  PrioritizedReplay replay_;
  Rng rng_;

  nn::Tensor state_;
  bool episode_live_ = false;
  double ep_return_ = 0;
  double last_train_reward_ = 0;
  std::int64_t step_ = 0;
  std::int64_t episodes_ = 0;
};

}  // namespace mznav::agents
