#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mznav/common.hpp"

namespace mznav::sim {

constexpr double kCellSize = 0.5;
constexpr double kRobotRadius = 0.18;
constexpr double kDMax = 8.0;
constexpr double kNearClip = 0.05;

struct SpawnAnchor {
  int cx = 0;
  int cy = 0;
  double theta = 0;
};

// Immutable occupancy grid. World coordinates: cell (cx, cy) spans
// [cx*cell, (cx+1)*cell] x [cy*cell, (cy+1)*cell] with cy equal to the text
// row index (row 0 is the first line of the map file).
class GridMap {
 public:
  // Parses map text: '#' wall, '.' free, 'S' free + eval spawn anchor, one
  // row per line, optionally followed by `spawn_theta=<radians>`. The grid
  // must be rectangular and fully enclosed by walls.
  static GridMap parse(const std::string& text);
  static GridMap load_file(const std::string& path);

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return kCellSize; }

  // Out-of-range cells count as occupied.
  bool occupied(int cx, int cy) const {
    if (cx < 0 || cy < 0 || cx >= width_ || cy >= height_) return true;
    return occ_[static_cast<std::size_t>(cy) * width_ + cx] != 0;
  }

  const std::optional<SpawnAnchor>& anchor() const { return anchor_; }
  int free_cell_count() const { return free_count_; }
  // Free cells in row-major order.
  std::vector<std::pair<int, int>> free_cells() const;

 private:
  int width_ = 0;
  int height_ = 0;
  int free_count_ = 0;
  std::vector<std::uint8_t> occ_;
  std::optional<SpawnAnchor> anchor_;
};

}  // namespace mznav::sim
