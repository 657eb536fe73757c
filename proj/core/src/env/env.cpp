#include "mznav/env/env.hpp"

#include "mznav/sim/reward.hpp"

namespace mznav::env {

SensorMode sensor_mode_from_name(const std::string& name) {
  if (name == "gray") return SensorMode::kGray;
  if (name == "depth") return SensorMode::kDepth;
  if (name == "depth_pred") return SensorMode::kDepthPred;
  if (name == "fused") return SensorMode::kFused;
  throw ConfigError("unknown sensor mode '" + name + "'");
}

std::string sensor_mode_name(SensorMode mode) {
  switch (mode) {
    case SensorMode::kGray: return "gray";
    case SensorMode::kDepth: return "depth";
    case SensorMode::kDepthPred: return "depth_pred";
    case SensorMode::kFused: return "fused";
  }
  return "?";
}

nn::Tensor build_observation_frame(SensorMode mode, const nn::Tensor& gray,
                                   const nn::Tensor& depth_true,
                                   DepthPredictor* model) {
  const int h = gray.dim(0), w = gray.dim(1);
  if (mode == SensorMode::kGray || mode == SensorMode::kDepth) {
    const nn::Tensor& src = mode == SensorMode::kGray ? gray : depth_true;
    return src.reshaped({h, w, 1});
  }
  if (model == nullptr) {
    throw ConfigError("sensor mode '" + sensor_mode_name(mode) +
                      "' requires a depth model");
  }
  nn::Tensor pred = model->predict(gray);
  if (pred.shape() != gray.shape()) {
    throw ContractError("depth model returned a mismatched frame shape");
  }
  if (mode == SensorMode::kDepthPred) {
    return pred.reshaped({h, w, 1});
  }
  nn::Tensor fused({h, w, 2});
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
    fused[2 * i] = gray[i];
    fused[2 * i + 1] = pred[i];
  }
  return fused;
}

Env::Env(const sim::GridMap* map, ActionSpace space, ObservationSpec obs,
         EpisodeConfig episode, std::uint64_t seed, DepthPredictor* model)
    : map_(map),
      space_(std::move(space)),
      obs_(obs),
      episode_(episode),
      model_(model),
      rng_(seed) {
  if (map_ == nullptr) throw ConfigError("Env: null map");
  if (episode_.horizon < 1) throw ConfigError("Env: horizon must be >= 1");
  if (episode_.gamma <= 0 || episode_.gamma > 1) {
    throw ConfigError("Env: gamma must be in (0, 1]");
  }
  if ((obs_.mode == SensorMode::kDepthPred ||
       obs_.mode == SensorMode::kFused) &&
      model_ == nullptr) {
    throw ConfigError("Env: sensor mode '" + sensor_mode_name(obs_.mode) +
                      "' requires a depth model");
  }
}

nn::Tensor Env::render_frame() const {
  auto out = sim::render_camera(*map_, pose_, obs_.size, obs_.supersample);
  return build_observation_frame(obs_.mode, out.gray, out.depth, model_);
}

nn::Tensor Env::state() const {
  if (!started_) throw ContractError("Env::state before reset");
  const int c = obs_.channels();
  nn::Tensor s(obs_.state_shape());
  const std::int64_t pixels =
      static_cast<std::int64_t>(obs_.size) * obs_.size;
  const int total_c = c * obs_.stack;
  for (int f = 0; f < obs_.stack; ++f) {
    const nn::Tensor& frame = frames_[static_cast<std::size_t>(f)];
    for (std::int64_t p = 0; p < pixels; ++p) {
      for (int ch = 0; ch < c; ++ch) {
        s[p * total_c + f * c + ch] = frame[p * c + ch];
      }
    }
  }
  return s;
}

nn::Tensor Env::reset(sim::SpawnMode mode) {
  pose_ = sim::spawn(*map_, rng_, mode);
  t_ = 0;
  done_ = false;
  started_ = true;
  frames_.clear();
  nn::Tensor frame = render_frame();
  for (int f = 0; f < obs_.stack; ++f) frames_.push_back(frame);
  return state();
}

StepResult Env::step(int action_index) {
  if (space_.is_continuous()) {
    throw ContractError("Env::step(index) on a continuous action space");
  }
  return step_command(map_discrete_action(space_, action_index));
}

StepResult Env::step_continuous(const std::array<double, 2>& z) {
  if (!space_.is_continuous()) {
    throw ContractError("Env::step_continuous on a discrete action space");
  }
  return step_command(map_continuous_action(z));
}

StepResult Env::step_command(const VelocityCommand& cmd) {
  if (!started_) throw ContractError("Env::step before reset");
  if (done_) throw ContractError("Env::step after episode end");

  pose_ = sim::step_kinematics(pose_, cmd.v, cmd.omega, kDt);
  const bool collided = sim::check_collision(*map_, pose_.x, pose_.y);
  const sim::RangeScan scan = sim::range_scan(*map_, pose_);
  const double c_d = sim::center_deviation(scan, episode_.cd_mode);
  const double reward =
      collided ? episode_.r_collision
               : sim::compute_reward(false, c_d, cmd.v, cmd.omega);

  frames_.pop_front();
  frames_.push_back(render_frame());
  t_ += 1;
  done_ = collided || t_ == episode_.horizon;

  StepResult out;
  out.state = state();
  out.reward = reward;
  out.done = done_;
  out.info = StepInfo{collided, c_d, cmd.v, cmd.omega, t_};
  return out;
}

void Env::serialize(io::Writer& w) const {
  w.f64(pose_.x);
  w.f64(pose_.y);
  w.f64(pose_.theta);
  w.u32(static_cast<std::uint32_t>(t_));
  w.u8(done_ ? 1 : 0);
  w.u8(started_ ? 1 : 0);
  for (std::uint64_t s : rng_.state()) w.u64(s);
  w.u32(static_cast<std::uint32_t>(frames_.size()));
  for (const auto& f : frames_) {
    w.f32_array(f.data(), static_cast<std::size_t>(f.numel()));
  }
}

void Env::deserialize(io::Reader& r) {
  pose_.x = r.f64();
  pose_.y = r.f64();
  pose_.theta = r.f64();
  t_ = static_cast<int>(r.u32());
  done_ = r.u8() != 0;
  started_ = r.u8() != 0;
  std::array<std::uint64_t, 4> st{};
  for (auto& s : st) s = r.u64();
  rng_.set_state(st);
  const std::uint32_t n = r.u32();
  if (n != 0 && static_cast<int>(n) != obs_.stack) {
    throw ConfigError("env blob: frame stack size mismatch");
  }
  frames_.clear();
  for (std::uint32_t i = 0; i < n; ++i) {
    nn::Tensor f({obs_.size, obs_.size, obs_.channels()});
    r.f32_array(f.data(), static_cast<std::size_t>(f.numel()));
    frames_.push_back(std::move(f));
  }
}

}  // namespace mznav::env
