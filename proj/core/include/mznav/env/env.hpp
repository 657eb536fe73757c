#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>

#include "mznav/bytes.hpp"
#include "mznav/env/actions.hpp"
#include "mznav/nn/tensor.hpp"
#include "mznav/sim/geometry.hpp"
#include "mznav/sim/map.hpp"
#include "mznav/sim/render.hpp"

namespace mznav::env {

constexpr double kDt = 0.2;

enum class SensorMode { kGray, kDepth, kDepthPred, kFused };

SensorMode sensor_mode_from_name(const std::string& name);
std::string sensor_mode_name(SensorMode mode);

struct ObservationSpec {
  int size = 84;  // square frames, W == H
  SensorMode mode = SensorMode::kGray;
  int stack = 4;
  int supersample = 1;

  // Channels per frame: 2 for fused, 1 otherwise.
  int channels() const { return mode == SensorMode::kFused ? 2 : 1; }
  // State tensor shape {H, W, C*stack}.
  std::vector<int> state_shape() const {
    return {size, size, channels() * stack};
  }
};

// Maps a grayscale frame {H, W} to predicted depth {H, W}. Implemented by
// depthgen; envapi only sees the interface.
class DepthPredictor {
 public:
  virtual ~DepthPredictor() = default;
  virtual nn::Tensor predict(const nn::Tensor& gray) = 0;
};

// Assembles one per-step frame {H, W, C} for the given sensor mode.
// depth_pred and fused modes require a predictor; depth passes ground truth
// through and never touches the model.
nn::Tensor build_observation_frame(SensorMode mode, const nn::Tensor& gray,
                                   const nn::Tensor& depth_true,
                                   DepthPredictor* model);

struct EpisodeConfig {
  int horizon = 2000;
  double r_collision = -1.0;
  double gamma = 0.99;  // stored here for the agents' use
  sim::CdMode cd_mode = sim::CdMode::kMean;
};

struct StepInfo {
  bool collided = false;
  double c_d = 0;
  double v = 0;
  double omega = 0;
  int t = 0;
};

struct StepResult {
  nn::Tensor state;
  double reward = 0;
  bool done = false;
  StepInfo info;
};

// One episodic environment over a shared immutable map. Step order:
// kinematics -> collision -> scan (fresh, at the new pose) -> reward ->
// render -> FIFO frame push -> t+1. Episodes end on collision or t == T.
class Env {
 public:
  Env(const sim::GridMap* map, ActionSpace space, ObservationSpec obs,
      EpisodeConfig episode, std::uint64_t seed, DepthPredictor* model);

  nn::Tensor reset(sim::SpawnMode mode);
  // Discrete step; the space must be discrete.
  StepResult step(int action_index);
  // Continuous step from a raw (pre-clamp) Gaussian sample.
  StepResult step_continuous(const std::array<double, 2>& z);

  const ObservationSpec& obs() const { return obs_; }
  const ActionSpace& space() const { return space_; }
  const EpisodeConfig& episode() const { return episode_; }
  const sim::Pose& pose() const { return pose_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  bool started() const { return started_; }

  // Current stacked state (valid after reset).
  nn::Tensor state() const;

  void serialize(io::Writer& w) const;
  void deserialize(io::Reader& r);

 private:
  StepResult step_command(const VelocityCommand& cmd);
  nn::Tensor render_frame() const;

  const sim::GridMap* map_;
  ActionSpace space_;
  ObservationSpec obs_;
  EpisodeConfig episode_;
  DepthPredictor* model_;
  Rng rng_;

  sim::Pose pose_;
  int t_ = 0;
  bool done_ = false;
  bool started_ = false;
  std::deque<nn::Tensor> frames_;  // stack of {H, W, C}, oldest first
};

}  // namespace mznav::env
