#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mznav/bytes.hpp"
#include "mznav/common.hpp"
#include "mznav/depth/dataset.hpp"
#include "mznav/env/env.hpp"
#include "mznav/nn/layers.hpp"
#include "mznav/nn/tensor.hpp"

namespace mznav::depth {

// Conditional gray-to-depth translator. The generator is an 84x84 U-net:
// four stride-2 4x4 convs (widths 32/64/128/256, leaky-relu 0.2) mirrored by
// four stride-2 transposed convs with skip concats (relu, sigmoid on the
// last), so the output is exactly input-shaped and bounded to [0, 1]. The
// discriminator scores (gray, depth) pairs with three stride-2 4x4 convs
// down to a 10x10 patch-logit grid (22x22 receptive field).
class DepthModel {
 public:
  static constexpr int kSize = 84;

  // Zero-filled parameters in the canonical shapes; init() draws fresh ones.
  DepthModel();
  void init(std::uint64_t seed);

  std::vector<nn::Param>& gen_params() { return gen_; }
  const std::vector<nn::Param>& gen_params() const { return gen_; }
  std::vector<nn::Param>& disc_params() { return disc_; }
  const std::vector<nn::Param>& disc_params() const { return disc_; }

  void save(io::Writer& w) const;
  void load(io::Reader& r);

 private:
  std::vector<nn::Param> gen_;
  std::vector<nn::Param> disc_;
};

void save_model(const DepthModel& model, const std::string& path);
DepthModel load_model(const std::string& path);

// Batched forward passes. gray and depth are {N, 84, 84, 1}; the
// discriminator returns {N, 10, 10, 1} logits.
nn::Tensor generator_forward(const DepthModel& model, const nn::Tensor& gray);
nn::Tensor discriminator_forward(const DepthModel& model,
                                 const nn::Tensor& gray,
                                 const nn::Tensor& depth);

// Deterministic single-frame inference: {84, 84} -> {84, 84} in [0, 1].
nn::Tensor predict_depth(const DepthModel& model, const nn::Tensor& gray);

// Mean over elements of softplus(z) - label * z. Optionally writes
// d(mean)/dz = (sigmoid(z) - label) / numel.
double bce_with_logits(const nn::Tensor& logits, double label,
                       nn::Tensor* dlogits = nullptr);

struct GanTrainConfig {
  int epochs = 200;
  double lambda_l1 = 100.0;
  double lr = 2e-4;
  double beta1 = 0.5;
  int batch = 8;
  bool l1_only = false;  // drop the adversarial terms (and the discriminator)
  std::uint64_t seed = 1;
};

struct EpochLoss {
  double d_loss = 0;  // zero in l1_only mode
  double g_adv = 0;   // zero in l1_only mode
  double g_l1 = 0;    // unweighted mean |G(x) - y|
};

struct DepthTrainResult {
  DepthModel model;
  std::vector<EpochLoss> losses;  // one entry per completed finite epoch
  bool diverged = false;          // aborted; model is the last finite epoch
};

// Alternating discriminator/generator Adam steps over shuffled train batches.
// Generator loss is BCE(D(x, G(x)), real) + lambda_l1 * mean|G(x) - y|; the
// discriminator sees half-weighted real and fake BCE. A non-finite batch loss
// (or gradient) aborts training and restores the last finite epoch snapshot.
DepthTrainResult train_depth(const PairDataset& ds, const GanTrainConfig& cfg);

struct DepthEval {
  double mean_l1 = 0;
  std::vector<double> per_pair;  // holdout order
};

// Per-pixel mean absolute error per holdout pair plus the mean over pairs.
DepthEval evaluate_depth(env::DepthPredictor& model, const PairDataset& ds);
DepthEval evaluate_depth(const DepthModel& model, const PairDataset& ds);

// Read-only view of a trained model behind the envapi predictor interface;
// shareable across env workers.
class PredictorAdapter final : public env::DepthPredictor {
 public:
  explicit PredictorAdapter(const DepthModel* model) : model_(model) {}
  nn::Tensor predict(const nn::Tensor& gray) override;

 private:
  const DepthModel* model_;
};

}  // namespace mznav::depth
