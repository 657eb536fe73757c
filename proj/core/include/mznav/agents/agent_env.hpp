#pragma once

#include <array>
#include <vector>

#include "mznav/bytes.hpp"
#include "mznav/env/env.hpp"
#include "mznav/nn/tensor.hpp"

namespace mznav::agents {

struct AgentStep {
  nn::Tensor state;
  double reward = 0;
  bool done = false;
};

// What the learners need from an environment: shapes, an action space, and
// an episodic step loop. The navigation Env plugs in via EnvAdapter; test
// MDPs implement this directly.
class AgentEnv {
 public:
  virtual ~AgentEnv() = default;

  virtual std::vector<int> state_shape() const = 0;
  // Per-step frame shape and stack depth; state = stack frames interleaved
  // channel-wise. frame_stack() == 1 means the state is a single frame.
  virtual std::vector<int> frame_shape() const = 0;
  virtual int frame_stack() const = 0;

  virtual int action_count() const = 0;  // 0 for continuous spaces
  virtual bool is_continuous() const = 0;

  virtual nn::Tensor reset(bool eval) = 0;
  virtual AgentStep step(int action) = 0;
  virtual AgentStep step_continuous(const std::array<double, 2>& z) = 0;

  virtual void serialize(io::Writer& w) const = 0;
  virtual void deserialize(io::Reader& r) = 0;
};

// Extracts the newest frame from a stacked state (channel layout: frame f of
// per-frame channel c lives at channel f*C + c).
nn::Tensor newest_frame(const nn::Tensor& state,
                        const std::vector<int>& frame_shape, int stack);

class EnvAdapter final : public AgentEnv {
 public:
  explicit EnvAdapter(env::Env* e) : env_(e) {
    if (env_ == nullptr) throw ConfigError("EnvAdapter: null env");
  }

  std::vector<int> state_shape() const override {
    return env_->obs().state_shape();
  }
  std::vector<int> frame_shape() const override {
    const auto& o = env_->obs();
    return {o.size, o.size, o.channels()};
  }
  int frame_stack() const override { return env_->obs().stack; }

  int action_count() const override {
    return env_->space().is_continuous() ? 0 : env_->space().size();
  }
  bool is_continuous() const override {
    return env_->space().is_continuous();
  }

  nn::Tensor reset(bool eval) override {
    return env_->reset(eval ? sim::SpawnMode::kEvalAnchor
                            : sim::SpawnMode::kRandom);
  }
  AgentStep step(int action) override {
    env::StepResult r = env_->step(action);
    return {std::move(r.state), r.reward, r.done};
  }
  AgentStep step_continuous(const std::array<double, 2>& z) override {
    env::StepResult r = env_->step_continuous(z);
    return {std::move(r.state), r.reward, r.done};
  }

  void serialize(io::Writer& w) const override { env_->serialize(w); }
  void deserialize(io::Reader& r) override { env_->deserialize(r); }

  env::Env* env() const { return env_; }

 private:
  env::Env* env_;
};

}  // namespace mznav::agents
