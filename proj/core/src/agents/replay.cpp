#include "mznav/agents/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mznav::agents {

SumTree::SumTree(int leaves) : leaves_(leaves) {
  if (leaves < 1) throw ConfigError("SumTree: need at least one leaf");
  base_ = 1;
  while (base_ < leaves) base_ *= 2;
  nodes_.assign(static_cast<std::size_t>(2 * base_), 0.0);
}

void SumTree::set(int leaf, double value) {
  if (leaf < 0 || leaf >= leaves_) throw ContractError("SumTree::set: bad leaf");
  if (!(value >= 0)) throw ContractError("SumTree::set: negative priority");
  int i = base_ + leaf;
  nodes_[static_cast<std::size_t>(i)] = value;
  for (i /= 2; i >= 1; i /= 2) {
    nodes_[static_cast<std::size_t>(i)] =
        nodes_[static_cast<std::size_t>(2 * i)] +
        nodes_[static_cast<std::size_t>(2 * i + 1)];
  }
}

int SumTree::find(double mass) const {
  int i = 1;
  while (i < base_) {
    const double left = nodes_[static_cast<std::size_t>(2 * i)];
    if (mass < left) {
      i = 2 * i;
    } else {
      mass -= left;
      i = 2 * i + 1;
    }
  }
  return std::min(i - base_, leaves_ - 1);
}

PrioritizedReplay::PrioritizedReplay(ReplayConfig cfg,
                                     std::vector<int> frame_shape, int stack)
    : cfg_(cfg),
      frame_shape_(std::move(frame_shape)),
      stack_(stack),
      tree_(cfg.capacity) {
  if (cfg_.capacity < 2 * stack_ + 2) {
    throw ConfigError("replay capacity too small for the frame stack");
  }
  if (cfg_.alpha < 0 || cfg_.eps_p <= 0) {
    throw ConfigError("replay: alpha must be >= 0 and eps_p > 0");
  }
  if (stack_ < 1 || frame_shape_.empty()) {
    throw ConfigError("replay: bad frame layout");
  }
  frame_bytes_ = 1;
  for (int d : frame_shape_) frame_bytes_ *= d;
  actions_.assign(static_cast<std::size_t>(cfg_.capacity), 0);
  rewards_.assign(static_cast<std::size_t>(cfg_.capacity), 0.0);
  dones_.assign(static_cast<std::size_t>(cfg_.capacity), 0);
  is_reset_.assign(static_cast<std::size_t>(cfg_.capacity), 0);
}

std::vector<int> PrioritizedReplay::state_shape() const {
  std::vector<int> s = frame_shape_;
  s.back() *= stack_;
  return s;
}

const std::uint8_t* PrioritizedReplay::frame_ptr(int slot) const {
  return blocks_[static_cast<std::size_t>(slot / kBlockSlots)].get() +
         static_cast<std::int64_t>(slot % kBlockSlots) * frame_bytes_;
}

std::uint8_t* PrioritizedReplay::frame_ptr(int slot) {
  const std::size_t block = static_cast<std::size_t>(slot / kBlockSlots);
  while (blocks_.size() <= block) {
    blocks_.push_back(std::make_unique<std::uint8_t[]>(
        static_cast<std::size_t>(kBlockSlots) * frame_bytes_));
  }
  return blocks_[block].get() +
         static_cast<std::int64_t>(slot % kBlockSlots) * frame_bytes_;
}

void PrioritizedReplay::set_priority(int slot, double folded) {
  const double old = tree_.get(slot);
  if (old == 0.0 && folded > 0.0) ++sampleable_;
  if (old > 0.0 && folded == 0.0) --sampleable_;
  tree_.set(slot, folded);
}

int PrioritizedReplay::append_slot(const nn::Tensor& frame, bool is_reset) {
  if (frame.numel() != frame_bytes_) {
    throw ContractError("replay: frame shape mismatch");
  }
  const int slot = next_;
  const bool overwriting = filled_ == cfg_.capacity;
  std::uint8_t* dst = frame_ptr(slot);
  for (std::int64_t i = 0; i < frame_bytes_; ++i) {
    const float v = std::min(1.0f, std::max(0.0f, frame[i]));
    dst[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  is_reset_[static_cast<std::size_t>(slot)] = is_reset ? 1 : 0;
  if (overwriting) {
    // Slots whose lookback window now spans the fresh frame can no longer be
    // reconstructed; retire them from sampling.
    for (int d = 1; d <= stack_; ++d) {
      set_priority((slot + d) % cfg_.capacity, 0.0);
    }
  }
  next_ = (next_ + 1) % cfg_.capacity;
  if (!overwriting) ++filled_;
  return slot;
}

void PrioritizedReplay::begin_episode(const nn::Tensor& frame) {
  const int slot = append_slot(frame, true);
  set_priority(slot, 0.0);
}

void PrioritizedReplay::push(const nn::Tensor& next_frame, int action,
                             double reward, bool done) {
  if (filled_ == 0) {
    throw ContractError("replay: push before begin_episode");
  }
  if (!std::isfinite(reward)) throw ContractError("replay: non-finite reward");
  const int slot = append_slot(next_frame, false);
  actions_[static_cast<std::size_t>(slot)] = action;
  rewards_[static_cast<std::size_t>(slot)] = reward;
  dones_[static_cast<std::size_t>(slot)] = done ? 1 : 0;
  set_priority(slot, std::pow(max_priority_, cfg_.alpha));
}

void PrioritizedReplay::fill_stack_ending_at(int slot, float* out) const {
  const std::int64_t c = frame_shape_.back();
  const std::int64_t pixels = frame_bytes_ / c;
  const std::int64_t total_c = c * stack_;
  int idx = slot;
  for (int f = stack_ - 1; f >= 0; --f) {
    const std::uint8_t* src = frame_ptr(idx);
    for (std::int64_t p = 0; p < pixels; ++p) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        out[p * total_c + f * c + ch] =
            static_cast<float>(src[p * c + ch]) / 255.0f;
      }
    }
    // Stop walking at the episode's first stored frame; earlier stack
    // positions repeat it.
    if (!is_reset_[static_cast<std::size_t>(idx)]) {
      idx = (idx + cfg_.capacity - 1) % cfg_.capacity;
    }
  }
}

ReplaySample PrioritizedReplay::sample(int batch, double beta, Rng& rng) {
  if (batch < 1) throw ContractError("replay: batch must be positive");
  if (sampleable_ < batch) {
    throw ContractError("replay: fewer sampleable transitions than batch");
  }
  const double total = tree_.total();
  if (!(total > 0)) throw ContractError("replay: zero total priority");

  ReplaySample out;
  out.slots.resize(static_cast<std::size_t>(batch));
  out.actions.resize(static_cast<std::size_t>(batch));
  out.rewards.resize(static_cast<std::size_t>(batch));
  out.dones.resize(static_cast<std::size_t>(batch));
  out.weights.resize(static_cast<std::size_t>(batch));

  std::vector<int> state_shape_b = state_shape();
  state_shape_b.insert(state_shape_b.begin(), batch);
  out.states = nn::Tensor(state_shape_b);
  out.next_states = nn::Tensor(state_shape_b);
  const std::int64_t row = out.states.numel() / batch;

  const double seg = total / batch;
  const double n = static_cast<double>(sampleable_);
  double w_max = 0;
  for (int k = 0; k < batch; ++k) {
    const double mass = (k + rng.uniform()) * seg;
    int slot = tree_.find(std::min(mass, std::nexttoward(total, 0.0)));
    // Numerical slack in the descent can land on a retired leaf; probe on.
    for (int guard = 0; tree_.get(slot) == 0.0 && guard < cfg_.capacity;
         ++guard) {
      slot = (slot + 1) % cfg_.capacity;
    }
    out.slots[static_cast<std::size_t>(k)] = slot;
    out.actions[static_cast<std::size_t>(k)] =
        actions_[static_cast<std::size_t>(slot)];
    out.rewards[static_cast<std::size_t>(k)] =
        rewards_[static_cast<std::size_t>(slot)];
    out.dones[static_cast<std::size_t>(k)] =
        dones_[static_cast<std::size_t>(slot)];

    const double prob = tree_.get(slot) / total;
    const double w = std::pow(n * prob, -beta);
    out.weights[static_cast<std::size_t>(k)] = w;
    w_max = std::max(w_max, w);

    fill_stack_ending_at((slot + cfg_.capacity - 1) % cfg_.capacity,
                         out.states.data() + k * row);
    fill_stack_ending_at(slot, out.next_states.data() + k * row);
  }
  for (double& w : out.weights) w /= w_max;
  return out;
}

void PrioritizedReplay::update_priorities(const std::vector<int>& slots,
                                          const std::vector<double>& abs_td) {
  if (slots.size() != abs_td.size()) {
    throw ContractError("replay: slots/td size mismatch");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const int slot = slots[i];
    if (slot < 0 || slot >= cfg_.capacity) {
      throw ContractError("replay: priority update out of range");
    }
    if (!std::isfinite(abs_td[i]) || abs_td[i] < 0) {
      throw ContractError("replay: bad TD magnitude");
    }
    const double p = abs_td[i] + cfg_.eps_p;
    max_priority_ = std::max(max_priority_, p);
    if (tree_.get(slot) > 0.0) {
      set_priority(slot, std::pow(p, cfg_.alpha));
    }
  }
}

void PrioritizedReplay::serialize(io::Writer& w) const {
  w.u32(static_cast<std::uint32_t>(cfg_.capacity));
  w.f64(cfg_.alpha);
  w.f64(cfg_.eps_p);
  w.u32(static_cast<std::uint32_t>(stack_));
  w.u32(static_cast<std::uint32_t>(frame_shape_.size()));
  for (int d : frame_shape_) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(next_));
  w.u32(static_cast<std::uint32_t>(filled_));
  w.f64(max_priority_);
  for (int i = 0; i < filled_; ++i) {
    w.bytes(frame_ptr(i), static_cast<std::size_t>(frame_bytes_));
    w.u32(static_cast<std::uint32_t>(actions_[static_cast<std::size_t>(i)]));
    w.f64(rewards_[static_cast<std::size_t>(i)]);
    w.u8(dones_[static_cast<std::size_t>(i)]);
    w.u8(is_reset_[static_cast<std::size_t>(i)]);
    w.f64(tree_.get(i));
  }
}

void PrioritizedReplay::deserialize(io::Reader& r) {
  if (static_cast<int>(r.u32()) != cfg_.capacity ||
      r.f64() != cfg_.alpha || r.f64() != cfg_.eps_p ||
      static_cast<int>(r.u32()) != stack_) {
    throw ConfigError("replay blob: configuration mismatch");
  }
  const std::uint32_t rank = r.u32();
  if (rank != frame_shape_.size()) {
    throw ConfigError("replay blob: frame rank mismatch");
  }
  for (int d : frame_shape_) {
    if (static_cast<int>(r.u32()) != d) {
      throw ConfigError("replay blob: frame shape mismatch");
    }
  }
  next_ = static_cast<int>(r.u32());
  filled_ = static_cast<int>(r.u32());
  if (next_ >= cfg_.capacity || filled_ > cfg_.capacity) {
    throw ConfigError("replay blob: counters out of range");
  }
  max_priority_ = r.f64();
  tree_ = SumTree(cfg_.capacity);
  sampleable_ = 0;
  for (int i = 0; i < filled_; ++i) {
    r.bytes(frame_ptr(i), static_cast<std::size_t>(frame_bytes_));
    actions_[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(r.u32());
    rewards_[static_cast<std::size_t>(i)] = r.f64();
    dones_[static_cast<std::size_t>(i)] = r.u8();
    is_reset_[static_cast<std::size_t>(i)] = r.u8();
    set_priority(i, r.f64());
  }
}

}  // namespace mznav::agents
