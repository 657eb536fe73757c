#include "mznav/agents/ppo.hpp"

#include <algorithm>
#include <cmath>

#include "mznav/nn/sampling.hpp"
#include "mznav/nn/serialize.hpp"

namespace mznav::agents {

namespace {

constexpr double kLog2PiE = 2.837877066409345;  // ln(2*pi*e)

std::int64_t row_numel(const nn::Tensor& batched) {
  return batched.numel() / batched.dim(0);
}

nn::Tensor gather_rows(const nn::Tensor& src, const std::vector<int>& idx) {
  std::vector<int> shape = src.shape();
  shape[0] = static_cast<int>(idx.size());
  nn::Tensor out(shape);
  const std::int64_t row = row_numel(src);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(src.data() + idx[k] * row, row,
                out.data() + static_cast<std::int64_t>(k) * row);
  }
  return out;
}

}  // namespace

double clipped_surrogate(double ratio, double adv, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * adv, clipped * adv);
}

PpoLossOut ppo_loss(const nn::Network& policy, const nn::Network& value,
                    const RolloutBatch& mb, const PpoConfig& cfg) {
  const int batch = mb.size();
  if (batch < 1) throw ContractError("ppo_loss: empty minibatch");

  auto pa = nn::forward(policy, mb.states);
  auto va = nn::forward(value, mb.states);
  const nn::Tensor& pout = nn::output(pa);
  const nn::Tensor& vout = nn::output(va);

  PpoLossOut out;
  nn::Tensor dp(pout.shape());
  nn::Tensor dv(vout.shape());

  for (int i = 0; i < batch; ++i) {
    const double adv = mb.advantages[static_cast<std::size_t>(i)];
    const double logp_old = mb.logp[static_cast<std::size_t>(i)];
    double logp_new;
    const float* prow = pout.data() + static_cast<std::int64_t>(i) *
                                          row_numel(pout);
    if (mb.continuous) {
      const int dim = pout.dim(1) / 2;
      logp_new = nn::gaussian_logprob(
          mb.zs[static_cast<std::size_t>(i)].data(), prow, prow + dim, dim);
    } else {
      const int a = mb.actions[static_cast<std::size_t>(i)];
      if (a < 0 || a >= pout.dim(1)) throw ContractError("ppo_loss: action");
      logp_new = std::log(std::max(static_cast<double>(prow[a]), 1e-12));
    }
    const double ratio = std::exp(logp_new - logp_old);
    out.policy -= clipped_surrogate(ratio, adv, cfg.clip_eps) / batch;
    out.approx_kl += ((ratio - 1.0) - std::log(ratio)) / batch;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) out.clip_frac += 1.0 / batch;

    // The min() gradient flows through the unclipped branch only when that
    // branch attains the min; otherwise the surrogate is flat in theta.
    const double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const bool unclipped_active = ratio * adv <= clipped * adv;
    const double coeff =
        unclipped_active ? -adv * ratio / batch : 0.0;

    float* dprow = dp.data() + static_cast<std::int64_t>(i) * row_numel(dp);
    if (mb.continuous) {
      const int dim = pout.dim(1) / 2;
      double h = 0;
      for (int d = 0; d < dim; ++d) {
        const double mu = prow[d];
        const double ls = prow[dim + d];
        const double sigma2 = std::exp(2.0 * ls);
        const double zc = mb.zs[static_cast<std::size_t>(i)]
                              [static_cast<std::size_t>(d)] - mu;
        // d logp / d mu and d logp / d log-std
        const double dmu = zc / sigma2;
        const double dls = zc * zc / sigma2 - 1.0;
        dprow[d] += static_cast<float>(coeff * dmu);
        dprow[dim + d] += static_cast<float>(coeff * dls);
        // entropy = sum_d (log-std + ln(2*pi*e)/2); d/d log-std = 1
        dprow[dim + d] += static_cast<float>(-cfg.c_e / batch);
        h += ls + 0.5 * kLog2PiE;
      }
      out.entropy += h / batch;
    } else {
      const int n = pout.dim(1);
      const int a = mb.actions[static_cast<std::size_t>(i)];
      const double p_a = std::max(static_cast<double>(prow[a]), 1e-12);
      dprow[a] += static_cast<float>(coeff / p_a);
      double h = 0;
      for (int j = 0; j < n; ++j) {
        const double p = std::max(static_cast<double>(prow[j]), 1e-12);
        h -= p * std::log(p);
        // d(-c_e * H)/dp_j = c_e * (ln p_j + 1)
        dprow[j] += static_cast<float>(cfg.c_e * (std::log(p) + 1.0) / batch);
      }
      out.entropy += h / batch;
    }

    const double v = vout[static_cast<std::int64_t>(i)];
    const double err = v - mb.returns[static_cast<std::size_t>(i)];
    out.value += err * err / batch;
    dv[static_cast<std::int64_t>(i)] =
        static_cast<float>(cfg.c_v * 2.0 * err / batch);
  }

  out.total = out.policy + cfg.c_v * out.value - cfg.c_e * out.entropy;
  out.policy_grads = nn::backward(policy, pa, dp);
  out.value_grads = nn::backward(value, va, dv);
  return out;
}

PpoUpdateMetrics ppo_update(const RolloutBatch& rollout, nn::Network& policy,
                            nn::Network& value, nn::AdamState& policy_adam,
                            nn::AdamState& value_adam, const PpoConfig& cfg,
                            Rng& rng) {
  const int t_len = rollout.size();
  if (t_len < 1) throw ContractError("ppo_update: empty rollout");

  PpoUpdateMetrics m;
  std::vector<int> order(static_cast<std::size_t>(t_len));
  for (int i = 0; i < t_len; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs && !m.early_stopped; ++epoch) {
    for (int i = t_len - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.range(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
    for (int start = 0; start < t_len && !m.early_stopped;
         start += cfg.minibatch) {
      const int count = std::min(cfg.minibatch, t_len - start);
      std::vector<int> idx(order.begin() + start,
                           order.begin() + start + count);

      RolloutBatch mb;
      mb.continuous = rollout.continuous;
      mb.states = gather_rows(rollout.states, idx);
      mb.logp.resize(idx.size());
      mb.advantages.resize(idx.size());
      mb.returns.resize(idx.size());
      if (rollout.continuous) {
        mb.zs.resize(idx.size());
      } else {
        mb.actions.resize(idx.size());
      }
      double mean = 0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::size_t s = static_cast<std::size_t>(idx[k]);
        mb.logp[k] = rollout.logp[s];
        mb.advantages[k] = rollout.advantages[s];
        mb.returns[k] = rollout.returns[s];
        if (rollout.continuous) {
          mb.zs[k] = rollout.zs[s];
        } else {
          mb.actions[k] = rollout.actions[s];
        }
        mean += mb.advantages[k];
      }
      mean /= static_cast<double>(count);
      double var = 0;
      for (double a : mb.advantages) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / static_cast<double>(count));
      for (double& a : mb.advantages) a = (a - mean) / (sd + 1e-8);

      PpoLossOut loss = ppo_loss(policy, value, mb, cfg);
      nn::clip_global_norm(loss.policy_grads, cfg.grad_clip);
      nn::clip_global_norm(loss.value_grads, cfg.grad_clip);
      if (cfg.fixed_sigma) {
        const auto& params = policy.params();
        for (std::size_t p = 0; p < params.size(); ++p) {
          const std::string& name = params[p].name;
          if (name.size() >= 7 &&
              name.compare(name.size() - 7, 7, ".logstd") == 0) {
            loss.policy_grads[p] = nn::Tensor(params[p].value.shape());
          }
        }
      }
      nn::adam_step(policy.mutable_params(), loss.policy_grads, policy_adam);
      nn::adam_step(value.mutable_params(), loss.value_grads, value_adam);

      m.policy_loss += loss.policy;
      m.value_loss += loss.value;
      m.entropy += loss.entropy;
      m.approx_kl += loss.approx_kl;
      m.clip_frac += loss.clip_frac;
      m.minibatches += 1;
      if (loss.approx_kl > cfg.kl_hard_cap) m.early_stopped = true;
    }
  }
  if (m.minibatches > 0) {
    m.policy_loss /= m.minibatches;
    m.value_loss /= m.minibatches;
    m.entropy /= m.minibatches;
    m.approx_kl /= m.minibatches;
    m.clip_frac /= m.minibatches;
  }
  return m;
}

PpoAgent::PpoAgent(std::vector<AgentEnv*> envs,
                   std::vector<nn::LayerSpec> policy_trunk,
                   std::vector<nn::LayerSpec> value_trunk, PpoConfig cfg,
                   std::uint64_t seed)
    : envs_(std::move(envs)), cfg_(cfg), rng_(Rng::derive(seed, 0x70706f)) {
  if (envs_.empty()) throw ConfigError("PpoAgent: no envs");
  for (AgentEnv* e : envs_) {
    if (e == nullptr) throw ConfigError("PpoAgent: null env");
  }
  if (cfg_.epochs < 1) throw ConfigError("PpoAgent: epochs must be >= 1");
  if (cfg_.clip_eps <= 0 || cfg_.clip_eps >= 1) {
    throw ConfigError("PpoAgent: clip epsilon must be in (0, 1)");
  }
  if (cfg_.horizon % static_cast<int>(envs_.size()) != 0) {
    throw ConfigError("PpoAgent: horizon must divide evenly across workers");
  }
  if (cfg_.minibatch < 1 || cfg_.minibatch > cfg_.horizon) {
    throw ConfigError("PpoAgent: minibatch must be in [1, horizon]");
  }
  continuous_ = envs_[0]->is_continuous();
  const auto shape = envs_[0]->state_shape();
  for (AgentEnv* e : envs_) {
    if (e->state_shape() != shape || e->is_continuous() != continuous_) {
      throw ConfigError("PpoAgent: workers disagree on spaces");
    }
  }

  if (continuous_) {
    policy_trunk.push_back(nn::LayerSpec::gaussian_head(2));
  } else {
    policy_trunk.push_back(
        nn::LayerSpec::softmax_head(envs_[0]->action_count()));
  }
  value_trunk.push_back(nn::LayerSpec::dense(1));
  policy_ = nn::Network(policy_trunk, shape);
  value_ = nn::Network(value_trunk, shape);
  Rng pinit = Rng::derive(seed, 0x70696e69);
  Rng vinit = Rng::derive(seed, 0x76696e69);
  policy_.init_params(pinit);
  value_.init_params(vinit);
  policy_adam_.init(policy_.params(), {cfg_.lr, 0.9, 0.999, 1e-8});
  value_adam_.init(value_.params(), {cfg_.lr, 0.9, 0.999, 1e-8});
  states_.resize(envs_.size());
  partial_return_.assign(envs_.size(), 0.0);
}

RolloutBatch PpoAgent::collect_rollout() {
  const int workers = static_cast<int>(envs_.size());
  const int per_worker = cfg_.horizon / workers;

  if (!started_) {
    for (int w = 0; w < workers; ++w) {
      states_[static_cast<std::size_t>(w)] = envs_[static_cast<std::size_t>(w)]
                                                 ->reset(false);
      partial_return_[static_cast<std::size_t>(w)] = 0;
    }
    started_ = true;
  }

  RolloutBatch out;
  out.continuous = continuous_;
  std::vector<int> shape = envs_[0]->state_shape();
  shape.insert(shape.begin(), cfg_.horizon);
  out.states = nn::Tensor(shape);
  out.logp.resize(static_cast<std::size_t>(cfg_.horizon));
  out.values.resize(static_cast<std::size_t>(cfg_.horizon));
  if (continuous_) {
    out.zs.resize(static_cast<std::size_t>(cfg_.horizon));
  } else {
    out.actions.resize(static_cast<std::size_t>(cfg_.horizon));
  }
  std::vector<double> rewards(static_cast<std::size_t>(cfg_.horizon));
  std::vector<std::uint8_t> dones(static_cast<std::size_t>(cfg_.horizon));

  const std::int64_t row = out.states.numel() / cfg_.horizon;
  std::vector<int> batch_shape = envs_[0]->state_shape();
  batch_shape.insert(batch_shape.begin(), workers);
  nn::Tensor batch_states(batch_shape);

  for (int t = 0; t < per_worker; ++t) {
    for (int w = 0; w < workers; ++w) {
      std::copy_n(states_[static_cast<std::size_t>(w)].data(), row,
                  batch_states.data() + static_cast<std::int64_t>(w) * row);
    }
    auto pacts = nn::forward(policy_, batch_states);
    auto vacts = nn::forward(value_, batch_states);
    const nn::Tensor& pout = nn::output(pacts);
    const nn::Tensor& vout = nn::output(vacts);

    for (int w = 0; w < workers; ++w) {
      const int slot = w * per_worker + t;
      std::copy_n(states_[static_cast<std::size_t>(w)].data(), row,
                  out.states.data() + static_cast<std::int64_t>(slot) * row);
      out.values[static_cast<std::size_t>(slot)] =
          vout[static_cast<std::int64_t>(w)];

      const float* prow =
          pout.data() + static_cast<std::int64_t>(w) * row_numel(pout);
      AgentStep s;
      if (continuous_) {
        const int dim = pout.dim(1) / 2;
        nn::GaussianSample gs =
            nn::sample_gaussian(prow, prow + dim, dim, rng_);
        out.zs[static_cast<std::size_t>(slot)] = {gs.z[0], gs.z[1]};
        out.logp[static_cast<std::size_t>(slot)] = gs.logprob;
        s = envs_[static_cast<std::size_t>(w)]->step_continuous(
            {gs.z[0], gs.z[1]});
      } else {
        nn::CategoricalSample cs =
            nn::sample_probs(prow, pout.dim(1), rng_);
        out.actions[static_cast<std::size_t>(slot)] = cs.index;
        out.logp[static_cast<std::size_t>(slot)] = cs.logprob;
        s = envs_[static_cast<std::size_t>(w)]->step(cs.index);
      }
      rewards[static_cast<std::size_t>(slot)] = s.reward;
      dones[static_cast<std::size_t>(slot)] = s.done ? 1 : 0;
      partial_return_[static_cast<std::size_t>(w)] += s.reward;
      ++step_;
      if (s.done) {
        ++episodes_;
        ++window_episodes_;
        window_return_sum_ += partial_return_[static_cast<std::size_t>(w)];
        partial_return_[static_cast<std::size_t>(w)] = 0;
        states_[static_cast<std::size_t>(w)] =
            envs_[static_cast<std::size_t>(w)]->reset(false);
      } else {
        states_[static_cast<std::size_t>(w)] = std::move(s.state);
      }
    }
  }

  // Bootstrap values for each worker's final state, then GAE per segment.
  for (int w = 0; w < workers; ++w) {
    std::copy_n(states_[static_cast<std::size_t>(w)].data(), row,
                batch_states.data() + static_cast<std::int64_t>(w) * row);
  }
  auto vacts = nn::forward(value_, batch_states);
  const nn::Tensor& boot = nn::output(vacts);

  out.advantages.resize(static_cast<std::size_t>(cfg_.horizon));
  out.returns.resize(static_cast<std::size_t>(cfg_.horizon));
  for (int w = 0; w < workers; ++w) {
    const std::size_t base = static_cast<std::size_t>(w * per_worker);
    std::vector<double> seg_r(rewards.begin() + static_cast<std::ptrdiff_t>(base),
                              rewards.begin() + static_cast<std::ptrdiff_t>(base) + per_worker);
    std::vector<std::uint8_t> seg_d(dones.begin() + static_cast<std::ptrdiff_t>(base),
                                    dones.begin() + static_cast<std::ptrdiff_t>(base) + per_worker);
    std::vector<double> seg_v(out.values.begin() + static_cast<std::ptrdiff_t>(base),
                              out.values.begin() + static_cast<std::ptrdiff_t>(base) + per_worker);
    seg_v.push_back(boot[static_cast<std::int64_t>(w)]);
    GaeOut g = gae(seg_r, seg_v, seg_d, cfg_.gamma, cfg_.lam);
    std::copy(g.advantages.begin(), g.advantages.end(),
              out.advantages.begin() + static_cast<std::ptrdiff_t>(base));
    std::copy(g.returns.begin(), g.returns.end(),
              out.returns.begin() + static_cast<std::ptrdiff_t>(base));
  }
  return out;
}

PpoUpdateMetrics PpoAgent::update(const RolloutBatch& rollout) {
  return ppo_update(rollout, policy_, value_, policy_adam_, value_adam_, cfg_,
                    rng_);
}

PpoMetrics PpoAgent::advance(std::int64_t n) {
  PpoMetrics m;
  window_return_sum_ = 0;
  window_episodes_ = 0;
  const std::int64_t goal = step_ + n;
  while (step_ < goal) {
    RolloutBatch rollout = collect_rollout();
    PpoUpdateMetrics u = update(rollout);
    m.policy_loss += u.policy_loss;
    m.value_loss += u.value_loss;
    m.entropy += u.entropy;
    m.approx_kl += u.approx_kl;
    m.clip_frac += u.clip_frac;
    m.updates += 1;
  }
  if (m.updates > 0) {
    m.policy_loss /= m.updates;
    m.value_loss /= m.updates;
    m.entropy /= m.updates;
    m.approx_kl /= m.updates;
    m.clip_frac /= m.updates;
  }
  if (window_episodes_ > 0) {
    last_train_reward_ = window_return_sum_ / window_episodes_;
  }
  m.train_reward = last_train_reward_;
  m.step = step_;
  m.episodes = episodes_;
  return m;
}

int PpoAgent::eval_action(const nn::Tensor& state) const {
  if (continuous_) throw ContractError("eval_action on a continuous policy");
  auto acts = nn::forward(policy_, state);
  const nn::Tensor& p = nn::output(acts);
  return nn::argmax(p.data(), static_cast<int>(p.numel()));
}

std::array<double, 2> PpoAgent::eval_action_mean(
    const nn::Tensor& state) const {
  if (!continuous_) throw ContractError("eval_action_mean on a discrete policy");
  auto acts = nn::forward(policy_, state);
  const nn::Tensor& p = nn::output(acts);
  return {static_cast<double>(p[0]), static_cast<double>(p[1])};
}

void PpoAgent::serialize(io::Writer& w) const {
  nn::write_params(w, policy_);
  nn::write_params(w, value_);
  nn::write_adam(w, policy_adam_);
  nn::write_adam(w, value_adam_);
  nn::write_rng(w, rng_);
  w.u64(static_cast<std::uint64_t>(step_));
  w.u64(static_cast<std::uint64_t>(episodes_));
  w.u8(started_ ? 1 : 0);
  w.f64(last_train_reward_);
  w.u32(static_cast<std::uint32_t>(envs_.size()));
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    w.f64(partial_return_[i]);
    const nn::Tensor& s = states_[i];
    w.u64(static_cast<std::uint64_t>(s.numel()));
    if (s.numel() > 0) {
      w.f32_array(s.data(), static_cast<std::size_t>(s.numel()));
    }
    envs_[i]->serialize(w);
  }
}

void PpoAgent::deserialize(io::Reader& r) {
  nn::read_params(r, policy_);
  nn::read_params(r, value_);
  nn::read_adam(r, policy_, policy_adam_);
  nn::read_adam(r, value_, value_adam_);
  nn::read_rng(r, rng_);
  step_ = static_cast<std::int64_t>(r.u64());
  episodes_ = static_cast<std::int64_t>(r.u64());
  started_ = r.u8() != 0;
  last_train_reward_ = r.f64();
  if (r.u32() != envs_.size()) {
    throw ConfigError("ppo blob: worker count mismatch");
  }
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    partial_return_[i] = r.f64();
    const std::uint64_t n = r.u64();
    if (n == 0) {
      states_[i] = nn::Tensor();
    } else {
      states_[i] = nn::Tensor(envs_[i]->state_shape());
      if (static_cast<std::uint64_t>(states_[i].numel()) != n) {
        throw ConfigError("ppo blob: state size mismatch");
      }
      r.f32_array(states_[i].data(), static_cast<std::size_t>(n));
    }
    envs_[i]->deserialize(r);
  }
}

}  // namespace mznav::agents
