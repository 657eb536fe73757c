#include "mznav/agents/dqn.hpp"

#include <algorithm>
#include <cmath>

#include "mznav/nn/sampling.hpp"
#include "mznav/nn/serialize.hpp"

namespace mznav::agents {

std::vector<double> dqn_target_from_q(const nn::Tensor& q_target,
                                      const nn::Tensor& q_online,
                                      const std::vector<double>& rewards,
                                      const std::vector<std::uint8_t>& dones,
                                      double gamma, bool double_q) {
  const int batch = q_target.dim(0);
  const int n_actions = q_target.dim(1);
  if (rewards.size() != static_cast<std::size_t>(batch) ||
      dones.size() != static_cast<std::size_t>(batch)) {
    throw ContractError("dqn_target: misaligned batch");
  }
  if (double_q && q_online.shape() != q_target.shape()) {
    throw ContractError("dqn_target: online/target Q shape mismatch");
  }
  std::vector<double> y(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    if (dones[static_cast<std::size_t>(i)]) {
      y[static_cast<std::size_t>(i)] = rewards[static_cast<std::size_t>(i)];
      continue;
    }
    const float* tq = q_target.data() + static_cast<std::int64_t>(i) * n_actions;
    double boot;
    if (double_q) {
      const float* oq =
          q_online.data() + static_cast<std::int64_t>(i) * n_actions;
      boot = tq[nn::argmax(oq, n_actions)];
    } else {
      boot = tq[nn::argmax(tq, n_actions)];
    }
    y[static_cast<std::size_t>(i)] =
        rewards[static_cast<std::size_t>(i)] + gamma * boot;
  }
  return y;
}

std::vector<double> dqn_target(const nn::Network& online,
                               const nn::Network& target,
                               const nn::Tensor& next_states,
                               const std::vector<double>& rewards,
                               const std::vector<std::uint8_t>& dones,
                               double gamma, bool double_q) {
  auto target_acts = nn::forward(target, next_states);
  const nn::Tensor& qt = nn::output(target_acts);
  if (!double_q) {
    return dqn_target_from_q(qt, qt, rewards, dones, gamma, false);
  }
  auto online_acts = nn::forward(online, next_states);
  return dqn_target_from_q(qt, nn::output(online_acts), rewards, dones, gamma,
                           true);
}

DqnLossOut dqn_loss(const nn::Network& online, const nn::Tensor& states,
                    const std::vector<int>& actions,
                    const std::vector<double>& y,
                    const std::vector<double>& weights, bool mse) {
  auto acts = nn::forward(online, states);
  const nn::Tensor& q = nn::output(acts);
  const int batch = q.dim(0);
  const int n_actions = q.dim(1);
  if (actions.size() != static_cast<std::size_t>(batch) ||
      y.size() != static_cast<std::size_t>(batch) ||
      weights.size() != static_cast<std::size_t>(batch)) {
    throw ContractError("dqn_loss: misaligned batch");
  }

  DqnLossOut out;
  out.abs_td.resize(static_cast<std::size_t>(batch));
  nn::Tensor dq(q.shape());
  for (int i = 0; i < batch; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= n_actions) throw ContractError("dqn_loss: bad action");
    const std::int64_t at = static_cast<std::int64_t>(i) * n_actions + a;
    const double qa = q[at];
    const double td = qa - y[static_cast<std::size_t>(i)];
    const double w = weights[static_cast<std::size_t>(i)];
    out.abs_td[static_cast<std::size_t>(i)] = std::abs(td);
    out.q_mean += qa / batch;
    double l, g;
    if (mse) {
      l = td * td;
      g = 2 * td;
    } else if (std::abs(td) <= 1.0) {
      l = 0.5 * td * td;
      g = td;
    } else {
      l = std::abs(td) - 0.5;
      g = td > 0 ? 1.0 : -1.0;
    }
    out.loss += w * l / batch;
    dq[at] = static_cast<float>(w * g / batch);
  }
  out.grads = nn::backward(online, acts, dq);
  return out;
}

DqnAgent::DqnAgent(AgentEnv* env, std::vector<nn::LayerSpec> trunk,
                   DqnConfig cfg, std::uint64_t seed)
    : env_(env),
      cfg_(cfg),
      replay_(cfg.replay, env ? env->frame_shape() : std::vector<int>{1},
              env ? env->frame_stack() : 1),
      rng_(Rng::derive(seed, 0x64716e)) {
  if (env_ == nullptr) throw ConfigError("DqnAgent: null env");
  if (env_->is_continuous()) {
    throw ConfigError("DqnAgent: continuous action spaces are not supported");
  }
  if (cfg_.gamma <= 0 || cfg_.gamma > 1) throw ConfigError("DqnAgent: gamma");
  if (cfg_.eps_start < cfg_.eps_end) {
    throw ConfigError("DqnAgent: epsilon schedule must be non-increasing");
  }
  if (cfg_.batch_size < 1 || cfg_.train_freq < 1 || cfg_.target_sync < 1) {
    throw ConfigError("DqnAgent: batch/train_freq/target_sync");
  }
  const int n_actions = env_->action_count();
  trunk.push_back(cfg_.dueling ? nn::LayerSpec::dueling_head(n_actions)
                               : nn::LayerSpec::dense(n_actions));
  online_ = nn::Network(trunk, env_->state_shape());
  target_ = nn::Network(trunk, env_->state_shape());
  Rng init = Rng::derive(seed, 0x696e6974);
  online_.init_params(init);
  adam_.init(online_.params(), {cfg_.lr, 0.9, 0.999, 1e-8});
  sync_target();
}

void DqnAgent::sync_target() {
  auto& dst = target_.mutable_params();
  const auto& src = online_.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].value = src[i].value;
}

double DqnAgent::epsilon_at(std::int64_t step) const {
  if (cfg_.eps_decay_steps <= 0) return cfg_.eps_end;
  const double frac =
      std::min(1.0, static_cast<double>(step) /
                        static_cast<double>(cfg_.eps_decay_steps));
  return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * frac;
}

double DqnAgent::beta_at(std::int64_t step) const {
  if (cfg_.per_beta_steps <= 0) return 1.0;
  const double frac =
      std::min(1.0, static_cast<double>(step) /
                        static_cast<double>(cfg_.per_beta_steps));
  return cfg_.per_beta0 + (1.0 - cfg_.per_beta0) * frac;
}

int DqnAgent::greedy_action(const nn::Tensor& state) const {
  auto acts = nn::forward(online_, state);
  return nn::argmax(nn::output(acts).data(), env_->action_count());
}

void DqnAgent::train_iteration(DqnMetrics& m) {
  ReplaySample batch = replay_.sample(cfg_.batch_size, beta_at(step_), rng_);
  std::vector<double> y =
      dqn_target(online_, target_, batch.next_states, batch.rewards,
                 batch.dones, cfg_.gamma, cfg_.double_q);
  DqnLossOut out = dqn_loss(online_, batch.states, batch.actions, y,
                            batch.weights, cfg_.mse);
  nn::clip_global_norm(out.grads, cfg_.grad_clip);
  nn::adam_step(online_.mutable_params(), out.grads, adam_);
  replay_.update_priorities(batch.slots, out.abs_td);
  m.loss += out.loss;
  m.q_mean += out.q_mean;
  m.train_iterations += 1;
}

DqnMetrics DqnAgent::advance(std::int64_t n) {
  DqnMetrics m;
  double window_return_sum = 0;
  int window_episodes = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!episode_live_) {
      state_ = env_->reset(false);
      replay_.begin_episode(
          newest_frame(state_, env_->frame_shape(), env_->frame_stack()));
      episode_live_ = true;
      ep_return_ = 0;
    }
    int a;
    if (rng_.uniform() < epsilon_at(step_)) {
      a = static_cast<int>(rng_.range(
          static_cast<std::uint64_t>(env_->action_count())));
    } else {
      a = greedy_action(state_);
    }
    AgentStep s = env_->step(a);
    replay_.push(newest_frame(s.state, env_->frame_shape(),
                              env_->frame_stack()),
                 a, s.reward, s.done);
    ep_return_ += s.reward;
    state_ = std::move(s.state);
    ++step_;
    if (s.done) {
      episode_live_ = false;
      ++episodes_;
      ++window_episodes;
      window_return_sum += ep_return_;
    }
    if (step_ >= cfg_.learn_start && step_ % cfg_.train_freq == 0 &&
        replay_.size() >= cfg_.batch_size) {
      train_iteration(m);
    }
    if (step_ % cfg_.target_sync == 0) sync_target();
  }
  if (m.train_iterations > 0) {
    m.loss /= m.train_iterations;
    m.q_mean /= m.train_iterations;
  }
  if (window_episodes > 0) {
    last_train_reward_ = window_return_sum / window_episodes;
  }
  m.train_reward = last_train_reward_;
  m.step = step_;
  m.episodes = episodes_;
  m.epsilon = epsilon_at(step_);
  return m;
}

void DqnAgent::serialize(io::Writer& w) const {
  nn::write_params(w, online_);
  nn::write_params(w, target_);
  nn::write_adam(w, adam_);
  nn::write_rng(w, rng_);
  w.u64(static_cast<std::uint64_t>(step_));
  w.u64(static_cast<std::uint64_t>(episodes_));
  w.u8(episode_live_ ? 1 : 0);
  w.f64(ep_return_);
  w.f64(last_train_reward_);
  w.u64(static_cast<std::uint64_t>(state_.numel()));
  if (state_.numel() > 0) {
    w.f32_array(state_.data(), static_cast<std::size_t>(state_.numel()));
  }
  replay_.serialize(w);
  env_->serialize(w);
}

void DqnAgent::deserialize(io::Reader& r) {
  nn::read_params(r, online_);
  nn::read_params(r, target_);
  nn::read_adam(r, online_, adam_);
  nn::read_rng(r, rng_);
  step_ = static_cast<std::int64_t>(r.u64());
  episodes_ = static_cast<std::int64_t>(r.u64());
  episode_live_ = r.u8() != 0;
  ep_return_ = r.f64();
  last_train_reward_ = r.f64();
  const std::uint64_t n = r.u64();
  if (n == 0) {
    state_ = nn::Tensor();
  } else {
    state_ = nn::Tensor(env_->state_shape());
    if (static_cast<std::uint64_t>(state_.numel()) != n) {
      throw ConfigError("dqn blob: state size mismatch");
    }
    r.f32_array(state_.data(), static_cast<std::size_t>(n));
  }
  replay_.deserialize(r);
  env_->deserialize(r);
}

}  // namespace mznav::agents
