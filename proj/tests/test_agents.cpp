#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "mznav/agents/dqn.hpp"
#include "mznav/agents/gae.hpp"
#include "mznav/agents/ppo.hpp"
#include "mznav/agents/replay.hpp"
#include "mznav/env/actions.hpp"
#include "mznav/nn/sampling.hpp"

using namespace mznav;
using namespace mznav::agents;

namespace {

// 5 states on a line. Action 1 moves right, 0 moves left (clamped at 0);
// reaching state 4 pays 1 and ends the episode. Starts uniformly on 0..3.
class ChainEnv final : public AgentEnv {
 public:
  explicit ChainEnv(std::uint64_t seed) : rng_(seed) {}

  std::vector<int> state_shape() const override { return {5}; }
  std::vector<int> frame_shape() const override { return {5}; }
  int frame_stack() const override { return 1; }
  int action_count() const override { return 2; }
  bool is_continuous() const override { return false; }

  nn::Tensor reset(bool) override {
    s_ = static_cast<int>(rng_.range(4));
    live_ = true;
    return one_hot(s_);
  }

  AgentStep step(int a) override {
    if (!live_) throw ContractError("chain: step before reset");
    ++action_counts_[static_cast<std::size_t>(a)];
    s_ = a == 1 ? s_ + 1 : std::max(s_ - 1, 0);
    const bool done = s_ == 4;
    if (done) live_ = false;
    return {one_hot(s_), done ? 1.0 : 0.0, done};
  }

  AgentStep step_continuous(const std::array<double, 2>&) override {
    throw ContractError("chain: discrete only");
  }

  void serialize(io::Writer& w) const override {
    w.u32(static_cast<std::uint32_t>(s_));
    w.u8(live_ ? 1 : 0);
    for (std::uint64_t v : rng_.state()) w.u64(v);
  }
  void deserialize(io::Reader& r) override {
    s_ = static_cast<int>(r.u32());
    live_ = r.u8() != 0;
    std::array<std::uint64_t, 4> st{};
    for (auto& v : st) v = r.u64();
    rng_.set_state(st);
  }

  const std::array<std::int64_t, 2>& action_counts() const {
    return action_counts_;
  }

 private:
  static nn::Tensor one_hot(int s) {
    nn::Tensor t({5});
    t[s] = 1.0f;
    return t;
  }

  int s_ = 0;
  bool live_ = false;
  Rng rng_;
  std::array<std::int64_t, 2> action_counts_{};
};

// One-step continuous task: reward peaks at z = (1, 0).
class ContinuousBanditEnv final : public AgentEnv {
 public:
  explicit ContinuousBanditEnv(std::uint64_t seed) : rng_(seed) {}

  std::vector<int> state_shape() const override { return {3}; }
  std::vector<int> frame_shape() const override { return {3}; }
  int frame_stack() const override { return 1; }
  int action_count() const override { return 0; }
  bool is_continuous() const override { return true; }

  nn::Tensor reset(bool) override { return fixed_state(); }
  AgentStep step(int) override {
    throw ContractError("bandit: continuous only");
  }
  AgentStep step_continuous(const std::array<double, 2>& z) override {
    const double r = -(z[0] - 1.0) * (z[0] - 1.0) - z[1] * z[1];
    return {fixed_state(), r, true};
  }

  void serialize(io::Writer& w) const override {
    for (std::uint64_t v : rng_.state()) w.u64(v);
  }
  void deserialize(io::Reader& r) override {
    std::array<std::uint64_t, 4> st{};
    for (auto& v : st) v = r.u64();
    rng_.set_state(st);
  }

 private:
  static nn::Tensor fixed_state() {
    return nn::Tensor({3}, {1.0f, 0.5f, -0.5f});
  }
  Rng rng_;
};

DqnConfig chain_dqn_config() {
  DqnConfig c;
  c.gamma = 0.9;
  c.lr = 5e-3;
  c.batch_size = 32;
  c.target_sync = 250;
  c.eps_start = 1.0;
  c.eps_end = 0.05;
  c.eps_decay_steps = 5000;
  c.learn_start = 500;
  c.train_freq = 1;
  c.replay.capacity = 10000;
  c.per_beta_steps = 20000;
  return c;
}

// Exact tabular Q for the chain (gamma 0.9).
std::array<std::array<double, 2>, 4> chain_q_star(double gamma) {
  std::array<std::array<double, 2>, 5> q{};
  for (int it = 0; it < 500; ++it) {
    for (int s = 0; s < 4; ++s) {
      for (int a = 0; a < 2; ++a) {
        const int next = a == 1 ? s + 1 : std::max(s - 1, 0);
        const double r = next == 4 ? 1.0 : 0.0;
        const double v =
            next == 4 ? 0.0 : std::max(q[static_cast<std::size_t>(next)][0],
                                       q[static_cast<std::size_t>(next)][1]);
        q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] =
            r + gamma * v;
      }
    }
  }
  std::array<std::array<double, 2>, 4> out{};
  for (int s = 0; s < 4; ++s) out[static_cast<std::size_t>(s)] = q[static_cast<std::size_t>(s)];
  return out;
}

std::vector<double> brute_force_gae(const std::vector<double>& r,
                                    const std::vector<double>& v,
                                    const std::vector<std::uint8_t>& d,
                                    double gamma, double lambda) {
  const std::size_t t_len = r.size();
  std::vector<double> adv(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    double acc = 0;
    double coef = 1;
    for (std::size_t k = t; k < t_len; ++k) {
      const double live = d[k] ? 0.0 : 1.0;
      acc += coef * (r[k] + gamma * v[k + 1] * live - v[k]);
      if (d[k]) break;
      coef *= gamma * lambda;
    }
    adv[t] = acc;
  }
  return adv;
}

}  // namespace

TEST_CASE("sum tree") {
  SUBCASE("prefix-sum descent") {
    SumTree t(2);
    t.set(0, 1.0);
    t.set(1, 3.0);
    CHECK(t.total() == 4.0);
    // P = (0.25, 0.75): mass below 1 lands on leaf 0.
    CHECK(t.find(0.5) == 0);
    CHECK(t.find(0.999) == 0);
    CHECK(t.find(1.001) == 1);
    CHECK(t.find(3.9) == 1);
  }

  SUBCASE("internal nodes stay sums of children") {
    SumTree t(1000);
    Rng rng(21);
    for (int i = 0; i < 20000; ++i) {
      t.set(static_cast<int>(rng.range(1000)), rng.uniform(0, 5));
    }
    const auto& nodes = t.nodes();
    for (int i = 1; i < t.base(); ++i) {
      CHECK(nodes[static_cast<std::size_t>(i)] ==
            nodes[static_cast<std::size_t>(2 * i)] +
                nodes[static_cast<std::size_t>(2 * i + 1)]);
    }
  }
}

TEST_CASE("prioritized replay") {
  auto make = [](double alpha, int capacity = 64) {
    ReplayConfig rc;
    rc.capacity = capacity;
    rc.alpha = alpha;
    return PrioritizedReplay(rc, {2}, 1);
  };
  const nn::Tensor f0({2}, {0.0f, 1.0f});

  SUBCASE("proportional sampling matches binomial bounds") {
    auto buf = make(1.0);
    buf.begin_episode(f0);
    buf.push(f0, 0, 0.0, false);
    buf.push(f0, 1, 0.0, false);
    buf.update_priorities({1, 2}, {1.0 - buf.config().eps_p,
                                   3.0 - buf.config().eps_p});
    CHECK(buf.tree().total() == doctest::Approx(4.0));

    Rng rng(77);
    int hits = 0;  // draws of slot 2 (priority 3)
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
      auto s = buf.sample(1, 0.0, rng);
      if (s.slots[0] == 2) ++hits;
    }
    const double sigma = std::sqrt(draws * 0.75 * 0.25);
    CHECK(std::abs(hits - draws * 0.75) < 3 * sigma);
  }

  SUBCASE("alpha 0 samples uniformly") {
    auto buf = make(0.0);
    buf.begin_episode(f0);
    buf.push(f0, 0, 0.0, false);
    buf.push(f0, 1, 0.0, false);
    buf.update_priorities({1, 2}, {0.0, 99.0});
    Rng rng(78);
    int hits = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
      auto s = buf.sample(1, 0.0, rng);
      if (s.slots[0] == 2) ++hits;
    }
    const double sigma = std::sqrt(draws * 0.25);
    CHECK(std::abs(hits - draws * 0.5) < 3 * sigma);
  }

  SUBCASE("priority floor and max-priority insertion") {
    auto buf = make(1.0);
    buf.begin_episode(f0);
    buf.push(f0, 0, 0.0, false);
    buf.update_priorities({1}, {0.0});
    CHECK(buf.tree().get(1) == doctest::Approx(buf.config().eps_p));
    buf.update_priorities({1}, {7.0});
    // The next insertion inherits the max priority seen so far.
    buf.push(f0, 0, 0.0, false);
    CHECK(buf.tree().get(2) == doctest::Approx(7.0 + buf.config().eps_p));
  }

  SUBCASE("alpha folds at insert so the root is sum p^alpha") {
    auto buf = make(0.6);
    buf.begin_episode(f0);
    for (int i = 0; i < 4; ++i) buf.push(f0, 0, 0.0, false);
    buf.update_priorities({1, 2, 3, 4}, {0.3, 1.2, 0.0, 2.5});
    const double e = buf.config().eps_p;
    const double want = std::pow(0.3 + e, 0.6) + std::pow(1.2 + e, 0.6) +
                        std::pow(0.0 + e, 0.6) + std::pow(2.5 + e, 0.6);
    CHECK(buf.tree().total() == doctest::Approx(want).epsilon(1e-6));
  }

  SUBCASE("IS weights follow (N*P)^-beta with batch-max normalization") {
    auto buf = make(1.0);
    buf.begin_episode(f0);
    for (int i = 0; i < 7; ++i) buf.push(f0, i, 0.1 * i, i == 6);
    std::vector<int> slots{1, 2, 3, 4, 5, 6, 7};
    buf.update_priorities(slots, {0.1, 0.4, 0.9, 1.6, 2.5, 3.6, 4.9});
    Rng rng(5);
    auto s = buf.sample(4, 0.5, rng);
    const double total = buf.tree().total();
    const double n = buf.size();
    double w_max_raw = 0;
    std::vector<double> raw;
    for (int slot : s.slots) {
      const double p = buf.tree().get(slot) / total;
      raw.push_back(std::pow(n * p, -0.5));
      w_max_raw = std::max(w_max_raw, raw.back());
    }
    double seen_max = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(s.weights[i] == doctest::Approx(raw[i] / w_max_raw));
      CHECK(s.weights[i] <= 1.0 + 1e-12);
      seen_max = std::max(seen_max, s.weights[i]);
    }
    CHECK(seen_max == doctest::Approx(1.0));
    for (std::size_t i = 0; i < s.slots.size(); ++i) {
      CHECK(s.actions[i] == s.slots[i] - 1);
      CHECK(s.rewards[i] == doctest::Approx(0.1 * (s.slots[i] - 1)));
    }
  }

  SUBCASE("sampling an empty or undersized buffer is a contract violation") {
    auto buf = make(1.0);
    Rng rng(1);
    CHECK_THROWS_AS(buf.sample(1, 0.4, rng), ContractError);
    buf.begin_episode(f0);
    buf.push(f0, 0, 0.0, false);
    CHECK_THROWS_AS(buf.sample(2, 0.4, rng), ContractError);
  }

  SUBCASE("ring wrap retires unreconstructable slots") {
    ReplayConfig rc;
    rc.capacity = 16;
    rc.alpha = 0.6;
    PrioritizedReplay buf(rc, {2}, 4);
    Rng rng(3);
    for (int ep = 0; ep < 12; ++ep) {
      buf.begin_episode(f0);
      for (int t = 0; t < 4; ++t) buf.push(f0, t, 0.0, t == 3);
    }
    int live = 0;
    for (int i = 0; i < rc.capacity; ++i) {
      if (buf.tree().get(i) > 0) ++live;
    }
    CHECK(live == buf.size());
    CHECK(buf.size() >= 4);
    for (int i = 0; i < 50; ++i) {
      auto s = buf.sample(4, 0.4, rng);
      for (int slot : s.slots) {
        CHECK(!buf.slot_is_reset(slot));
        CHECK(buf.tree().get(slot) > 0);
      }
    }
  }
}

TEST_CASE("replay reconstructs the environment's frame stacking") {
  sim::GridMap map = sim::GridMap::parse(
      "########\n"
      "#S.....#\n"
      "#......#\n"
      "#......#\n"
      "########\n"
      "spawn_theta=0.7\n");
  env::ObservationSpec obs;
  obs.size = 16;
  env::Env e(&map, env::ActionSpace::disc5(), obs, env::EpisodeConfig{}, 9,
             nullptr);
  EnvAdapter adapter(&e);

  ReplayConfig rc;
  rc.capacity = 128;
  PrioritizedReplay buf(rc, adapter.frame_shape(), adapter.frame_stack());

  nn::Tensor state = adapter.reset(false);
  buf.begin_episode(newest_frame(state, adapter.frame_shape(), 4));
  std::vector<nn::Tensor> states{state};
  Rng rng(4);
  for (int t = 0; t < 12; ++t) {
    auto s = adapter.step(static_cast<int>(rng.range(5)));
    buf.push(newest_frame(s.state, adapter.frame_shape(), 4),
             static_cast<int>(t % 5), 0.0, s.done);
    states.push_back(s.state);
    if (s.done) break;
  }

  nn::Tensor rebuilt({16, 16, 4});
  for (std::size_t k = 0; k < states.size(); ++k) {
    buf.fill_stack_ending_at(static_cast<int>(k), rebuilt.data());
    for (std::int64_t i = 0; i < rebuilt.numel(); ++i) {
      const float q =
          std::lround(std::min(1.0f, std::max(0.0f, states[k][i])) * 255.0f) /
          255.0f;
      CHECK(rebuilt[i] == doctest::Approx(q).epsilon(1e-7));
    }
  }
}

TEST_CASE("dqn targets") {
  SUBCASE("terminal, vanilla, and double examples") {
    const nn::Tensor qt({3, 2}, {5.0f, 7.0f, 2.0f, 0.0f, 5.0f, 7.0f});
    const nn::Tensor qo({3, 2}, {1.0f, 3.0f, 1.0f, 3.0f, 1.0f, 3.0f});
    const std::vector<double> r{-1.0, 1.0, 0.0};
    const std::vector<std::uint8_t> d{1, 0, 0};
    auto vanilla = dqn_target_from_q(qt, qt, r, d, 0.99, false);
    CHECK(vanilla[0] == -1.0);
    CHECK(vanilla[1] == doctest::Approx(2.98));
    auto dbl = dqn_target_from_q(qt, qo, r, d, 0.99, true);
    CHECK(dbl[0] == -1.0);
    CHECK(dbl[2] == doctest::Approx(6.93));
  }

  SUBCASE("double target never exceeds vanilla; equal iff argmax agrees") {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
      nn::Tensor qt({1, 5});
      nn::Tensor qo({1, 5});
      for (int a = 0; a < 5; ++a) {
        qt[a] = static_cast<float>(rng.uniform(-2, 2));
        qo[a] = static_cast<float>(rng.uniform(-2, 2));
      }
      const std::vector<double> r{0.0};
      const std::vector<std::uint8_t> d{0};
      const double v = dqn_target_from_q(qt, qt, r, d, 0.99, false)[0];
      const double w = dqn_target_from_q(qt, qo, r, d, 0.99, true)[0];
      CHECK(w <= v + 1e-12);
      const bool same_argmax =
          nn::argmax(qt.data(), 5) == nn::argmax(qo.data(), 5);
      if (same_argmax) {
        CHECK(w == doctest::Approx(v));
      } else {
        CHECK(w < v);
      }
    }
  }

  SUBCASE("net-forward form matches the table form") {
    nn::Network net({nn::LayerSpec::dense(8), nn::LayerSpec::relu(),
                     nn::LayerSpec::dense(3)},
                    {4});
    nn::Network tgt = net;
    Rng rng(8);
    net.init_params(rng);
    tgt.init_params(rng);
    nn::Tensor next({2, 4});
    for (std::int64_t i = 0; i < next.numel(); ++i) {
      next[i] = static_cast<float>(rng.uniform(-1, 1));
    }
    const std::vector<double> r{0.5, -0.5};
    const std::vector<std::uint8_t> d{0, 0};
    auto via_net = dqn_target(net, tgt, next, r, d, 0.9, true);
    auto qa_t = nn::forward(tgt, next);
    auto qa_o = nn::forward(net, next);
    auto via_q = dqn_target_from_q(nn::output(qa_t), nn::output(qa_o), r, d,
                                   0.9, true);
    for (int i = 0; i < 2; ++i) CHECK(via_net[i] == doctest::Approx(via_q[i]));
  }
}

TEST_CASE("dqn loss") {
  nn::Network net({nn::LayerSpec::dense(6), nn::LayerSpec::relu(),
                   nn::LayerSpec::dense(2)},
                  {3});
  Rng rng(15);
  net.init_params(rng);
  nn::Tensor s({1, 3}, {0.4f, -0.2f, 0.9f});
  auto acts = nn::forward(net, s);
  const double q0 = nn::output(acts)[0];

  SUBCASE("zero TD error gives zero loss and gradients") {
    auto out = dqn_loss(net, s, {0}, {q0}, {1.0}, false);
    CHECK(out.loss == doctest::Approx(0.0));
    CHECK(out.abs_td[0] == doctest::Approx(0.0));
    CHECK(nn::global_norm(out.grads) == doctest::Approx(0.0));
  }

  SUBCASE("huber quadratic and linear regions") {
    auto quad = dqn_loss(net, s, {0}, {q0 - 0.5}, {1.0}, false);
    CHECK(quad.loss == doctest::Approx(0.125));
    CHECK(quad.abs_td[0] == doctest::Approx(0.5));
    auto lin = dqn_loss(net, s, {0}, {q0 - 2.0}, {1.0}, false);
    CHECK(lin.loss == doctest::Approx(1.5));
    CHECK(lin.abs_td[0] == doctest::Approx(2.0));
  }

  SUBCASE("mse flag restores the squared objective") {
    auto out = dqn_loss(net, s, {0}, {q0 - 0.5}, {1.0}, true);
    CHECK(out.loss == doctest::Approx(0.25));
  }

  SUBCASE("IS weights scale the loss linearly") {
    auto w1 = dqn_loss(net, s, {0}, {q0 - 0.5}, {1.0}, false);
    auto w2 = dqn_loss(net, s, {0}, {q0 - 0.5}, {0.5}, false);
    CHECK(w2.loss == doctest::Approx(0.5 * w1.loss));
  }
}

TEST_CASE("dqn agent") {
  SUBCASE("epsilon schedule is monotone non-increasing") {
    ChainEnv env(1);
    auto cfg = chain_dqn_config();
    DqnAgent agent(&env, {}, cfg, 3);
    double prev = 2;
    for (std::int64_t s = 0; s <= 7000; s += 250) {
      const double e = agent.epsilon_at(s);
      CHECK(e <= prev);
      prev = e;
    }
    CHECK(agent.epsilon_at(0) == 1.0);
    CHECK(agent.epsilon_at(cfg.eps_decay_steps) ==
          doctest::Approx(cfg.eps_end));
    CHECK(agent.beta_at(0) == doctest::Approx(0.4));
    CHECK(agent.beta_at(cfg.per_beta_steps) == doctest::Approx(1.0));
  }

  SUBCASE("epsilon 1 explores uniformly") {
    ChainEnv env(2);
    auto cfg = chain_dqn_config();
    cfg.eps_end = 1.0;
    cfg.learn_start = 1 << 30;
    cfg.replay.capacity = 4096;
    DqnAgent agent(&env, {}, cfg, 4);
    agent.advance(10000);
    const auto& counts = env.action_counts();
    const double n = static_cast<double>(counts[0] + counts[1]);
    const double chi2 =
        (counts[0] - n / 2) * (counts[0] - n / 2) / (n / 2) +
        (counts[1] - n / 2) * (counts[1] - n / 2) / (n / 2);
    CHECK(chi2 < 10.83);  // chi-square df 1 at p = 0.001
  }

  SUBCASE("target syncs bit-equal; greedy action is argmax") {
    ChainEnv env(5);
    auto cfg = chain_dqn_config();
    cfg.target_sync = 64;
    cfg.learn_start = 16;
    cfg.batch_size = 8;
    DqnAgent agent(&env, {}, cfg, 6);
    agent.advance(64);  // lands exactly on a sync boundary
    const auto& on = agent.online().params();
    const auto& tg = agent.target().params();
    for (std::size_t i = 0; i < on.size(); ++i) {
      REQUIRE(on[i].value.numel() == tg[i].value.numel());
      CHECK(std::memcmp(on[i].value.data(), tg[i].value.data(),
                        static_cast<std::size_t>(on[i].value.numel()) * 4) ==
            0);
    }

    nn::Tensor probe({5}, {0.0f, 1.0f, 0.0f, 0.0f, 0.0f});
    auto acts = nn::forward(agent.online(), probe);
    CHECK(agent.greedy_action(probe) ==
          nn::argmax(nn::output(acts).data(), 2));
  }

  SUBCASE("converges to the value-iteration Q on the chain") {
    ChainEnv env(11);
    DqnAgent agent(&env, {}, chain_dqn_config(), 13);
    auto m = agent.advance(20000);
    CHECK(m.train_reward == doctest::Approx(1.0));  // every episode pays 1
    CHECK(m.episodes > 1000);
    const auto q_star = chain_q_star(0.9);
    for (int s = 0; s < 4; ++s) {
      nn::Tensor x({5});
      x[s] = 1.0f;
      auto acts = nn::forward(agent.online(), x);
      const nn::Tensor& q = nn::output(acts);
      for (int a = 0; a < 2; ++a) {
        CHECK(std::abs(q[a] - q_star[static_cast<std::size_t>(s)]
                                    [static_cast<std::size_t>(a)]) < 1e-2);
      }
    }
  }

  SUBCASE("serialize/deserialize resumes identically") {
    ChainEnv env_a(21);
    ChainEnv env_b(5555);
    auto cfg = chain_dqn_config();
    DqnAgent a(&env_a, {}, cfg, 31);
    a.advance(1500);
    io::Writer w;
    a.serialize(w);

    DqnAgent b(&env_b, {}, cfg, 9999);
    io::Reader r(w.data());
    b.deserialize(r);
    CHECK(b.step() == a.step());

    auto ma = a.advance(800);
    auto mb = b.advance(800);
    CHECK(ma.loss == doctest::Approx(mb.loss));
    CHECK(ma.episodes == mb.episodes);
    const auto& pa = a.online().params();
    const auto& pb = b.online().params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(std::memcmp(pa[i].value.data(), pb[i].value.data(),
                        static_cast<std::size_t>(pa[i].value.numel()) * 4) ==
            0);
    }
  }

  SUBCASE("rejects continuous envs") {
    ContinuousBanditEnv env(1);
    CHECK_THROWS_AS(DqnAgent(&env, {}, DqnConfig{}, 1), ConfigError);
  }
}

TEST_CASE("gae") {
  SUBCASE("lambda 0 collapses to one-step deltas") {
    const std::vector<double> r{1.0, -0.5, 2.0};
    const std::vector<double> v{0.3, 0.7, -0.1, 0.4};
    const std::vector<std::uint8_t> d{0, 0, 0};
    auto out = gae(r, v, d, 0.99, 0.0);
    for (int t = 0; t < 3; ++t) {
      const double delta = r[static_cast<std::size_t>(t)] +
                           0.99 * v[static_cast<std::size_t>(t) + 1] -
                           v[static_cast<std::size_t>(t)];
      CHECK(out.advantages[static_cast<std::size_t>(t)] ==
            doctest::Approx(delta));
      CHECK(out.returns[static_cast<std::size_t>(t)] ==
            doctest::Approx(delta + v[static_cast<std::size_t>(t)]));
    }
  }

  SUBCASE("zero values, lambda 1 gives discounted reward sums") {
    const std::vector<double> r{1.0, 2.0, 3.0};
    const std::vector<double> v{0, 0, 0, 0};
    const std::vector<std::uint8_t> d{0, 0, 0};
    auto out = gae(r, v, d, 0.9, 1.0);
    CHECK(out.advantages[2] == doctest::Approx(3.0));
    CHECK(out.advantages[1] == doctest::Approx(2.0 + 0.9 * 3.0));
    CHECK(out.advantages[0] == doctest::Approx(1.0 + 0.9 * 2.0 + 0.81 * 3.0));
  }

  SUBCASE("three-step example matches the brute-force evaluation") {
    const std::vector<double> r{1.0, 1.0, 1.0};
    const std::vector<double> v{0.5, 0.5, 0.5, 0.5};
    const std::vector<std::uint8_t> d{0, 0, 0};
    auto out = gae(r, v, d, 0.99, 0.95);
    auto ref = brute_force_gae(r, v, d, 0.99, 0.95);
    for (int t = 0; t < 3; ++t) {
      CHECK(std::abs(out.advantages[static_cast<std::size_t>(t)] -
                     ref[static_cast<std::size_t>(t)]) < 1e-6);
    }
  }

  SUBCASE("random segments with terminals match brute force") {
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
      const int t_len = 1 + static_cast<int>(rng.range(30));
      std::vector<double> r(static_cast<std::size_t>(t_len));
      std::vector<double> v(static_cast<std::size_t>(t_len) + 1);
      std::vector<std::uint8_t> d(static_cast<std::size_t>(t_len));
      for (int t = 0; t < t_len; ++t) {
        r[static_cast<std::size_t>(t)] = rng.uniform(-1, 1);
        v[static_cast<std::size_t>(t)] = rng.uniform(-1, 1);
        d[static_cast<std::size_t>(t)] = rng.uniform() < 0.15 ? 1 : 0;
      }
      v[static_cast<std::size_t>(t_len)] = rng.uniform(-1, 1);
      auto out = gae(r, v, d, 0.97, 0.9);
      auto ref = brute_force_gae(r, v, d, 0.97, 0.9);
      for (int t = 0; t < t_len; ++t) {
        CHECK(out.advantages[static_cast<std::size_t>(t)] ==
              doctest::Approx(ref[static_cast<std::size_t>(t)])
                  .epsilon(1e-9));
      }
    }
  }

  SUBCASE("misaligned inputs are a contract violation") {
    CHECK_THROWS_AS(gae({1.0}, {0.0}, {0}, 0.99, 0.95), ContractError);
  }
}

TEST_CASE("ppo loss") {
  SUBCASE("clipped surrogate examples") {
    CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
    CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
    CHECK(clipped_surrogate(1.0, 0.7, 0.2) == doctest::Approx(0.7));
    CHECK(clipped_surrogate(1.1, 2.0, 0.2) == doctest::Approx(2.2));
  }

  SUBCASE("ratio 1 gives policy term -mean(adv) with clip inactive") {
    nn::Network policy({nn::LayerSpec::softmax_head(4)}, {3});
    nn::Network value({nn::LayerSpec::dense(1)}, {3});
    Rng rng(41);
    policy.init_params(rng);
    value.init_params(rng);

    RolloutBatch mb;
    mb.states = nn::Tensor({3, 3});
    Rng srng(42);
    for (std::int64_t i = 0; i < 9; ++i) {
      mb.states[i] = static_cast<float>(srng.uniform(-1, 1));
    }
    mb.actions = {1, 0, 3};
    mb.advantages = {0.5, -0.2, 1.1};
    mb.returns = {0.3, 0.3, 0.3};
    auto pacts = nn::forward(policy, mb.states);
    const nn::Tensor& probs = nn::output(pacts);
    for (int i = 0; i < 3; ++i) {
      mb.logp.push_back(std::log(
          probs[static_cast<std::int64_t>(i) * 4 +
                mb.actions[static_cast<std::size_t>(i)]]));
    }

    PpoConfig cfg;
    auto out = ppo_loss(policy, value, mb, cfg);
    const double mean_adv = (0.5 - 0.2 + 1.1) / 3.0;
    CHECK(out.policy == doctest::Approx(-mean_adv).epsilon(1e-5));
    CHECK(out.clip_frac == doctest::Approx(0.0));
    CHECK(out.approx_kl == doctest::Approx(0.0).epsilon(1e-6));

    auto vacts = nn::forward(value, mb.states);
    const nn::Tensor& vout = nn::output(vacts);
    double want_v = 0;
    for (int i = 0; i < 3; ++i) {
      const double e = vout[i] - 0.3;
      want_v += e * e / 3;
    }
    CHECK(out.value == doctest::Approx(want_v));
    CHECK(out.total == doctest::Approx(out.policy + cfg.c_v * out.value -
                                       cfg.c_e * out.entropy));
  }

  SUBCASE("uniform categorical entropy is ln 5") {
    std::vector<float> p(5, 0.2f);
    CHECK(nn::categorical_entropy(p.data(), 5) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-6));
  }
}

TEST_CASE("ppo update") {
  auto make_batch = [](const nn::Network& policy, int t_len, int action,
                       double adv) {
    RolloutBatch b;
    b.states = nn::Tensor({t_len, 3});
    Rng srng(50);
    for (std::int64_t i = 0; i < b.states.numel(); ++i) {
      b.states[i] = static_cast<float>(srng.uniform(-1, 1));
    }
    auto acts = nn::forward(policy, b.states);
    const nn::Tensor& probs = nn::output(acts);
    const int n = probs.dim(1);
    for (int i = 0; i < t_len; ++i) {
      b.actions.push_back(action);
      b.logp.push_back(
          std::log(probs[static_cast<std::int64_t>(i) * n + action]));
      b.advantages.push_back(adv);
      b.returns.push_back(0.0);
      b.values.push_back(0.0);
    }
    return b;
  };

  SUBCASE("zero epochs leaves parameters untouched") {
    nn::Network policy({nn::LayerSpec::softmax_head(2)}, {3});
    nn::Network value({nn::LayerSpec::dense(1)}, {3});
    Rng rng(60);
    policy.init_params(rng);
    value.init_params(rng);
    auto before = policy.params();

    PpoConfig cfg;
    cfg.epochs = 0;
    nn::AdamState pa, va;
    pa.init(policy.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    va.init(value.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    auto batch = make_batch(policy, 8, 0, 1.0);
    Rng urng(61);
    auto m = ppo_update(batch, policy, value, pa, va, cfg, urng);
    CHECK(m.minibatches == 0);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(std::memcmp(before[i].value.data(), policy.params()[i].value.data(),
                        static_cast<std::size_t>(before[i].value.numel()) *
                            4) == 0);
    }
  }

  SUBCASE("lr 0 leaves parameters untouched with finite losses") {
    nn::Network policy({nn::LayerSpec::softmax_head(2)}, {3});
    nn::Network value({nn::LayerSpec::dense(1)}, {3});
    Rng rng(62);
    policy.init_params(rng);
    value.init_params(rng);
    auto before = policy.params();

    PpoConfig cfg;
    cfg.epochs = 1;
    cfg.minibatch = 8;
    cfg.lr = 0.0;
    nn::AdamState pa, va;
    pa.init(policy.params(), {0.0, 0.9, 0.999, 1e-8});
    va.init(value.params(), {0.0, 0.9, 0.999, 1e-8});
    auto batch = make_batch(policy, 8, 0, 1.0);
    Rng urng(63);
    auto m = ppo_update(batch, policy, value, pa, va, cfg, urng);
    CHECK(m.minibatches == 1);
    CHECK(std::isfinite(m.policy_loss));
    CHECK(std::isfinite(m.value_loss));
    CHECK(std::isfinite(m.entropy));
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(std::memcmp(before[i].value.data(), policy.params()[i].value.data(),
                        static_cast<std::size_t>(before[i].value.numel()) *
                            4) == 0);
    }
  }

  SUBCASE("positive advantages raise the chosen action's probability") {
    nn::Network policy({nn::LayerSpec::softmax_head(2)}, {3});
    nn::Network value({nn::LayerSpec::dense(1)}, {3});
    Rng rng(64);
    policy.init_params(rng);
    value.init_params(rng);

    // Action 0 always advantaged, action 1 always penalized; the minibatch
    // normalization preserves the split.
    auto batch = make_batch(policy, 64, 0, 1.0);
    auto pacts = nn::forward(policy, batch.states);
    const nn::Tensor& pr = nn::output(pacts);
    for (int i = 1; i < 64; i += 2) {
      batch.actions[static_cast<std::size_t>(i)] = 1;
      batch.logp[static_cast<std::size_t>(i)] =
          std::log(pr[static_cast<std::int64_t>(i) * 2 + 1]);
      batch.advantages[static_cast<std::size_t>(i)] = -1.0;
    }
    auto before_acts = nn::forward(policy, batch.states);
    double before_p = 0;
    for (int i = 0; i < 64; ++i) {
      before_p += nn::output(before_acts)[2 * i] / 64;
    }

    PpoConfig cfg;
    cfg.epochs = 1;
    cfg.minibatch = 64;
    cfg.lr = 1e-2;
    nn::AdamState pa, va;
    pa.init(policy.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    va.init(value.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    Rng urng(65);
    ppo_update(batch, policy, value, pa, va, cfg, urng);

    auto after_acts = nn::forward(policy, batch.states);
    double after_p = 0;
    for (int i = 0; i < 64; ++i) {
      after_p += nn::output(after_acts)[2 * i] / 64;
    }
    CHECK(after_p > before_p);
  }

  SUBCASE("gaussian policy moves its mean toward rewarded samples") {
    nn::Network policy({nn::LayerSpec::gaussian_head(2)}, {3});
    nn::Network value({nn::LayerSpec::dense(1)}, {3});
    Rng rng(66);
    policy.init_params(rng);
    value.init_params(rng);

    RolloutBatch b;
    b.continuous = true;
    b.states = nn::Tensor({32, 3});
    for (std::int64_t i = 0; i < b.states.numel(); ++i) {
      b.states[i] = 0.5f;
    }
    auto acts = nn::forward(policy, b.states);
    const nn::Tensor& out0 = nn::output(acts);
    const double mu0_before = out0[0];
    // Samples above the current mean are advantaged, samples below are
    // penalized: both halves push mu upward.
    for (int i = 0; i < 32; ++i) {
      const float* row = out0.data() + static_cast<std::int64_t>(i) * 4;
      const double side = i % 2 == 0 ? 1.0 : -1.0;
      const std::array<double, 2> z{row[0] + side, static_cast<double>(row[1])};
      b.zs.push_back(z);
      b.logp.push_back(nn::gaussian_logprob(z.data(), row, row + 2, 2));
      b.advantages.push_back(side);
      b.returns.push_back(0.0);
      b.values.push_back(0.0);
    }

    PpoConfig cfg;
    cfg.epochs = 1;
    cfg.minibatch = 32;
    cfg.lr = 1e-2;

    SUBCASE("learned sigma") {
      nn::AdamState pa, va;
      pa.init(policy.params(), {cfg.lr, 0.9, 0.999, 1e-8});
      va.init(value.params(), {cfg.lr, 0.9, 0.999, 1e-8});
      Rng urng(67);
      ppo_update(b, policy, value, pa, va, cfg, urng);
      auto acts2 = nn::forward(policy, b.states);
      CHECK(nn::output(acts2)[0] > mu0_before);
    }

    SUBCASE("fixed sigma freezes the log-std parameter") {
      cfg.fixed_sigma = true;
      nn::AdamState pa, va;
      pa.init(policy.params(), {cfg.lr, 0.9, 0.999, 1e-8});
      va.init(value.params(), {cfg.lr, 0.9, 0.999, 1e-8});
      Rng urng(68);
      ppo_update(b, policy, value, pa, va, cfg, urng);
      for (const auto& p : policy.params()) {
        if (p.name.find("logstd") != std::string::npos) {
          for (std::int64_t i = 0; i < p.value.numel(); ++i) {
            CHECK(p.value[i] == 0.0f);
          }
        }
      }
      auto acts2 = nn::forward(policy, b.states);
      CHECK(nn::output(acts2)[0] > mu0_before);
    }
  }

  SUBCASE("kl hard cap stops remaining epochs") {
    nn::Network policy({nn::LayerSpec::softmax_head(2)}, {3});
    nn::Network value({nn::LayerSpec::dense(1)}, {3});
    Rng rng(69);
    policy.init_params(rng);
    value.init_params(rng);
    auto batch = make_batch(policy, 8, 0, 100.0);
    PpoConfig cfg;
    cfg.epochs = 50;
    cfg.minibatch = 8;
    cfg.lr = 0.5;
    nn::AdamState pa, va;
    pa.init(policy.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    va.init(value.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    Rng urng(70);
    auto m = ppo_update(batch, policy, value, pa, va, cfg, urng);
    CHECK(m.early_stopped);
    CHECK(m.minibatches < 50);
  }

  SUBCASE("clip fraction stays within [0, 1]") {
    nn::Network policy({nn::LayerSpec::softmax_head(2)}, {3});
    nn::Network value({nn::LayerSpec::dense(1)}, {3});
    Rng rng(71);
    policy.init_params(rng);
    value.init_params(rng);
    auto batch = make_batch(policy, 32, 1, -2.0);
    PpoConfig cfg;
    cfg.epochs = 3;
    cfg.minibatch = 16;
    cfg.lr = 5e-2;
    nn::AdamState pa, va;
    pa.init(policy.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    va.init(value.params(), {cfg.lr, 0.9, 0.999, 1e-8});
    Rng urng(72);
    auto m = ppo_update(batch, policy, value, pa, va, cfg, urng);
    CHECK(m.clip_frac >= 0.0);
    CHECK(m.clip_frac <= 1.0);
  }
}

TEST_CASE("ppo agent") {
  SUBCASE("collected log-probs give ratio 1 before the first update") {
    ChainEnv env(81);
    std::vector<AgentEnv*> envs{&env};
    PpoConfig cfg;
    cfg.horizon = 64;
    cfg.minibatch = 32;
    PpoAgent agent(envs, {nn::LayerSpec::dense(16), nn::LayerSpec::relu()},
                   {nn::LayerSpec::dense(16), nn::LayerSpec::relu()}, cfg, 82);
    RolloutBatch roll = agent.collect_rollout();
    REQUIRE(roll.size() == 64);
    auto acts = nn::forward(agent.policy(), roll.states);
    const nn::Tensor& probs = nn::output(acts);
    for (int i = 0; i < 64; ++i) {
      const double p =
          probs[static_cast<std::int64_t>(i) * 2 +
                roll.actions[static_cast<std::size_t>(i)]];
      const double ratio =
          std::exp(std::log(p) - roll.logp[static_cast<std::size_t>(i)]);
      CHECK(std::abs(ratio - 1.0) < 1e-5);
    }
  }

  SUBCASE("two lockstep workers merge deterministically") {
    auto build = [](std::uint64_t env_seed_base) {
      auto e0 = std::make_unique<ChainEnv>(env_seed_base);
      auto e1 = std::make_unique<ChainEnv>(env_seed_base + 1);
      return std::pair(std::move(e0), std::move(e1));
    };
    auto [a0, a1] = build(100);
    auto [b0, b1] = build(100);
    PpoConfig cfg;
    cfg.horizon = 64;
    cfg.minibatch = 32;
    std::vector<AgentEnv*> ea{a0.get(), a1.get()};
    std::vector<AgentEnv*> eb{b0.get(), b1.get()};
    PpoAgent a(ea, {nn::LayerSpec::dense(8), nn::LayerSpec::relu()},
               {nn::LayerSpec::dense(8), nn::LayerSpec::relu()}, cfg, 101);
    PpoAgent b(eb, {nn::LayerSpec::dense(8), nn::LayerSpec::relu()},
               {nn::LayerSpec::dense(8), nn::LayerSpec::relu()}, cfg, 101);
    auto ma = a.advance(128);
    auto mb = b.advance(128);
    CHECK(ma.policy_loss == mb.policy_loss);
    CHECK(ma.approx_kl == mb.approx_kl);
    CHECK(ma.episodes == mb.episodes);
    const auto& pa = a.policy().params();
    const auto& pb = b.policy().params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(std::memcmp(pa[i].value.data(), pb[i].value.data(),
                        static_cast<std::size_t>(pa[i].value.numel()) * 4) ==
            0);
    }
  }

  SUBCASE("chain returns improve with training") {
    ChainEnv env(83);
    std::vector<AgentEnv*> envs{&env};
    PpoConfig cfg;
    cfg.horizon = 256;
    cfg.minibatch = 64;
    cfg.lr = 5e-3;
    PpoAgent agent(envs, {nn::LayerSpec::dense(32), nn::LayerSpec::relu()},
                   {nn::LayerSpec::dense(32), nn::LayerSpec::relu()}, cfg, 84);
    agent.advance(6144);
    const double episodes_per_step =
        static_cast<double>(agent.episodes()) /
        static_cast<double>(agent.step());
    // A right-moving policy finishes an episode every ~2.5 steps; random
    // walks take ~12.
    CHECK(episodes_per_step > 1.0 / 6.0);
  }

  SUBCASE("continuous agent trains and exposes the mean action") {
    ContinuousBanditEnv env(85);
    std::vector<AgentEnv*> envs{&env};
    PpoConfig cfg;
    cfg.horizon = 64;
    cfg.minibatch = 32;
    cfg.epochs = 2;
    PpoAgent agent(envs, {nn::LayerSpec::dense(8), nn::LayerSpec::relu()},
                   {nn::LayerSpec::dense(8), nn::LayerSpec::relu()}, cfg, 86);
    auto m = agent.advance(256);
    CHECK(std::isfinite(m.policy_loss));
    CHECK(std::isfinite(m.entropy));
    nn::Tensor s({3}, {1.0f, 0.5f, -0.5f});
    auto z = agent.eval_action_mean(s);
    CHECK(std::isfinite(z[0]));
    CHECK(std::isfinite(z[1]));
    CHECK_THROWS_AS(agent.eval_action(s), ContractError);
  }

  SUBCASE("greedy eval mode chains into the action mapping") {
    nn::Network policy({nn::LayerSpec::gaussian_head(2)}, {3});
    auto& params = policy.mutable_params();
    for (auto& p : params) {
      for (std::int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = 0.0f;
    }
    nn::Tensor s({3}, {1.0f, 0.5f, -0.5f});
    auto acts = nn::forward(policy, s);
    const nn::Tensor& out = nn::output(acts);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.0f);
    auto cmd = env::map_continuous_action({out[0], out[1]});
    CHECK(cmd.v == doctest::Approx(0.175));
    CHECK(cmd.omega == doctest::Approx(0.0));
  }

  SUBCASE("serialize/deserialize resumes identically") {
    ChainEnv env_a(91);
    ChainEnv env_b(7777);
    PpoConfig cfg;
    cfg.horizon = 64;
    cfg.minibatch = 32;
    std::vector<AgentEnv*> ea{&env_a};
    std::vector<AgentEnv*> eb{&env_b};
    PpoAgent a(ea, {nn::LayerSpec::dense(8), nn::LayerSpec::relu()},
               {nn::LayerSpec::dense(8), nn::LayerSpec::relu()}, cfg, 92);
    a.advance(192);
    io::Writer w;
    a.serialize(w);

    PpoAgent b(eb, {nn::LayerSpec::dense(8), nn::LayerSpec::relu()},
               {nn::LayerSpec::dense(8), nn::LayerSpec::relu()}, cfg, 4321);
    io::Reader r(w.data());
    b.deserialize(r);
    CHECK(b.step() == a.step());

    auto ma = a.advance(128);
    auto mb = b.advance(128);
    CHECK(ma.policy_loss == mb.policy_loss);
    CHECK(ma.approx_kl == mb.approx_kl);
    const auto& pa = a.policy().params();
    const auto& pb = b.policy().params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(std::memcmp(pa[i].value.data(), pb[i].value.data(),
                        static_cast<std::size_t>(pa[i].value.numel()) * 4) ==
            0);
    }
  }
}
