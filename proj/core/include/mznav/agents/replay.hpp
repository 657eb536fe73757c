#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mznav/bytes.hpp"
#include "mznav/common.hpp"
#include "mznav/nn/tensor.hpp"

namespace mznav::agents {

// Binary sum-tree over a fixed set of leaves, supporting prefix-sum descent.
// Leaves are padded up to a power of two; absent leaves stay at zero.
class SumTree {
 public:
  explicit SumTree(int leaves);

  int leaves() const { return leaves_; }
  double total() const { return nodes_[1]; }
  double get(int leaf) const { return nodes_[static_cast<std::size_t>(base_ + leaf)]; }
  void set(int leaf, double value);

  // Index of the leaf where the running prefix sum passes mass.
  // Requires 0 <= mass < total().
  int find(double mass) const;

  // Heap layout: nodes_[1] is the root, children of i are 2i and 2i+1.
  const std::vector<double>& nodes() const { return nodes_; }
  int base() const { return base_; }

 private:
  int leaves_;
  int base_;  // first leaf index in nodes_
  std::vector<double> nodes_;
};

struct ReplayConfig {
  int capacity = 250000;
  double alpha = 0.6;
  double eps_p = 1e-6;
};

struct ReplaySample {
  std::vector<int> slots;  // for update_priorities
  nn::Tensor states;       // {B, ...stacked state shape}
  nn::Tensor next_states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> weights;  // (N*P)^-beta, normalized by the batch max
};

// Prioritized ring buffer storing one quantized frame per step rather than
// whole stacked states; states are rebuilt at sample time by walking back
// through the ring, repeating the episode's first frame at boundaries (the
// same repeat-fill the environment applies on reset). Priorities are stored
// alpha-folded, so the tree total is directly sum p_i^alpha.
class PrioritizedReplay {
 public:
  PrioritizedReplay(ReplayConfig cfg, std::vector<int> frame_shape, int stack);

  // Marks an episode start; frame is the reset observation's (single) frame.
  void begin_episode(const nn::Tensor& frame);
  // Appends one transition: the frame observed after acting, and the
  // action/reward/done that produced it. New transitions get the current max
  // priority so each is sampled at least once.
  void push(const nn::Tensor& next_frame, int action, double reward, bool done);

  // Stratified proportional sampling. beta is the IS exponent for this call.
  ReplaySample sample(int batch, double beta, Rng& rng);
  // p_i = |TD_i| + eps_p, folded through alpha into the tree.
  void update_priorities(const std::vector<int>& slots,
                         const std::vector<double>& abs_td);

  int size() const { return sampleable_; }
  int capacity() const { return cfg_.capacity; }
  const ReplayConfig& config() const { return cfg_; }
  const SumTree& tree() const { return tree_; }
  std::vector<int> state_shape() const;

  // Rebuilds the stacked state ending at a slot (newest frame last); exposed
  // for verification.
  void fill_stack_ending_at(int slot, float* out) const;
  bool slot_is_reset(int slot) const {
    return is_reset_[static_cast<std::size_t>(slot)] != 0;
  }

  void serialize(io::Writer& w) const;
  void deserialize(io::Reader& r);

 private:
  int append_slot(const nn::Tensor& frame, bool is_reset);
  const std::uint8_t* frame_ptr(int slot) const;
  std::uint8_t* frame_ptr(int slot);
  void set_priority(int slot, double folded);

  ReplayConfig cfg_;
  std::vector<int> frame_shape_;
  int stack_;
  std::int64_t frame_bytes_;

  static constexpr int kBlockSlots = 4096;
  std::vector<std::unique_ptr<std::uint8_t[]>> blocks_;

  std::vector<std::int32_t> actions_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> dones_;
  std::vector<std::uint8_t> is_reset_;

  SumTree tree_;
  int next_ = 0;    // ring write position
  int filled_ = 0;  // slots holding data
  int sampleable_ = 0;
  double max_priority_ = 1.0;  // in p-space (pre-alpha)
};

}  // namespace mznav::agents
