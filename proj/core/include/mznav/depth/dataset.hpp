#pragma once

#include <string>
#include <vector>

#include "mznav/common.hpp"
#include "mznav/nn/tensor.hpp"
#include "mznav/sim/geometry.hpp"
#include "mznav/sim/map.hpp"

namespace mznav::depth {

// Aligned gray/depth frame pairs with pose provenance. Frames are {84, 84}
// in [0, 1]; the split is by index, train and holdout disjoint.
struct PairDataset {
  std::vector<nn::Tensor> gray;
  std::vector<nn::Tensor> depth;
  std::vector<sim::Pose> poses;
  std::vector<int> train;
  std::vector<int> holdout;

  int size() const { return static_cast<int>(gray.size()); }
};

enum class CollectPolicy {
  kRandomSafe,  // rejection-sampled collision-free spawns
  kScan,        // free cells x 8 headings, row-major, rng untouched
};

// Renders both camera frames at n collision-free poses and splits the last
// tenth (floor) off as holdout. kScan throws ConfigError when the map grid
// has fewer than n poses.
PairDataset collect_pairs(const sim::GridMap& map, int n, Rng& rng,
                          CollectPolicy policy);

// Directory layout: NNNN_gray.pgm / NNNN_depth.pgm per pair plus index.txt
// with one "x y theta" line per pose. PGM pixels are 8-bit quantized; poses
// round-trip exactly. Loading recomputes the split from the pair count.
void save_dataset(const PairDataset& ds, const std::string& dir);
PairDataset load_dataset(const std::string& dir);

}  // namespace mznav::depth
