#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mznav/agents/agent_env.hpp"
#include "mznav/agents/gae.hpp"
#include "mznav/nn/adam.hpp"
#include "mznav/nn/layers.hpp"

namespace mznav::agents {

// Defaults follow the common baselines convention for this agent family.
struct PpoConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch = 64;
  int horizon = 2048;  // env steps per update, summed across workers
  double c_v = 0.5;
  double c_e = 0.01;
  double lr = 2.5e-4;
  double grad_clip = 0.5;
  bool fixed_sigma = false;  // freeze log-std at its init (0) for continuous
  double kl_hard_cap = 0.5;
};

// min(ratio*adv, clip(ratio, 1-eps, 1+eps)*adv)
double clipped_surrogate(double ratio, double adv, double eps);

// One on-policy batch. For discrete policies actions[] is used; for
// continuous, zs[] holds the raw pre-clamp samples. logp is the behavior
// policy's log density of the recorded action. advantages are consumed as
// given; ppo_update normalizes per minibatch before calling ppo_loss.
struct RolloutBatch {
  nn::Tensor states;  // {T, ...state_shape}
  std::vector<int> actions;
  std::vector<std::array<double, 2>> zs;
  std::vector<double> logp;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;
  bool continuous = false;

  int size() const { return static_cast<int>(logp.size()); }
};

struct PpoLossOut {
  double total = 0;     // policy + c_v*value - c_e*entropy
  double policy = 0;    // -mean(clipped surrogate)
  double value = 0;     // mean((V - target)^2), unscaled
  double entropy = 0;   // mean policy entropy
  double approx_kl = 0; // mean((r-1) - ln r)
  double clip_frac = 0;
  std::vector<nn::Tensor> policy_grads;
  std::vector<nn::Tensor> value_grads;
};

// Loss and gradients for one minibatch against separate policy/value nets.
PpoLossOut ppo_loss(const nn::Network& policy, const nn::Network& value,
                    const RolloutBatch& mb, const PpoConfig& cfg);

struct PpoUpdateMetrics {
  double policy_loss = 0;  // means over processed minibatches
  double value_loss = 0;
  double entropy = 0;
  double approx_kl = 0;
  double clip_frac = 0;
  int minibatches = 0;
  bool early_stopped = false;  // KL hard cap tripped
};

// epochs x shuffled minibatches of (normalize adv -> ppo_loss -> clip ->
// adam) with separate optimizers. Stops early once a minibatch's approx KL
// exceeds cfg.kl_hard_cap (that minibatch's step is still applied).
PpoUpdateMetrics ppo_update(const RolloutBatch& rollout, nn::Network& policy,
                            nn::Network& value, nn::AdamState& policy_adam,
                            nn::AdamState& value_adam, const PpoConfig& cfg,
                            Rng& rng);

struct PpoMetrics {
  std::int64_t step = 0;
  std::int64_t episodes = 0;
  double train_reward = 0;
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double approx_kl = 0;
  double clip_frac = 0;
  int updates = 0;
};

// On-policy learner over one or more lockstep env workers sharing one policy.
// Workers advance synchronously; transitions merge in worker-index order, so
// a run is a pure function of (seed, configs).
class PpoAgent {
 public:
  // Trunks exclude heads: the policy gets a softmax head (discrete) or a
  // 2-dim gaussian head (continuous); the value net gets a dense(1) head.
  PpoAgent(std::vector<AgentEnv*> envs, std::vector<nn::LayerSpec> policy_trunk,
           std::vector<nn::LayerSpec> value_trunk, PpoConfig cfg,
           std::uint64_t seed);

  // Collects exactly cfg.horizon env steps (horizon/workers each) and fills
  // GAE advantages/returns.
  RolloutBatch collect_rollout();
  PpoUpdateMetrics update(const RolloutBatch& rollout);

  // Whole collect+update rounds until at least n more env steps have run.
  PpoMetrics advance(std::int64_t n);

  int eval_action(const nn::Tensor& state) const;              // argmax
  std::array<double, 2> eval_action_mean(const nn::Tensor& state) const;

  std::int64_t step() const { return step_; }
  std::int64_t episodes() const { return episodes_; }
  int workers() const { return static_cast<int>(envs_.size()); }
  const nn::Network& policy() const { return policy_; }
  const nn::Network& value_net() const { return value_; }
  const PpoConfig& config() const { return cfg_; }

  void serialize(io::Writer& w) const;
  void deserialize(io::Reader& r);

 private:
  std::vector<AgentEnv*> envs_;
  PpoConfig cfg_;
  bool continuous_ = false;
  nn::Network policy_;
  nn::Network value_;
  nn::AdamState policy_adam_;
  nn::AdamState value_adam_;
  Rng rng_;

  bool started_ = false;
  std::vector<nn::Tensor> states_;      // per worker
  std::vector<double> partial_return_;  // per worker
  double last_train_reward_ = 0;
  double window_return_sum_ = 0;
  int window_episodes_ = 0;
  std::int64_t step_ = 0;
  std::int64_t episodes_ = 0;
};

}  // namespace mznav::agents
