#include "mznav/sim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mznav::sim {

Pose step_kinematics(const Pose& p, double v, double omega, double dt) {
  Pose out;
  out.x = p.x + v * std::cos(p.theta) * dt;
  out.y = p.y + v * std::sin(p.theta) * dt;
  out.theta = wrap_angle(p.theta + omega * dt);
  return out;
}

bool check_collision(const GridMap& map, double x, double y, double r_robot) {
  const double cs = map.cell_size();
  // Only cells within r_robot of the point can matter.
  const int cx0 = static_cast<int>(std::floor((x - r_robot) / cs));
  const int cx1 = static_cast<int>(std::floor((x + r_robot) / cs));
  const int cy0 = static_cast<int>(std::floor((y - r_robot) / cs));
  const int cy1 = static_cast<int>(std::floor((y + r_robot) / cs));
  for (int cy = cy0; cy <= cy1; ++cy) {
    for (int cx = cx0; cx <= cx1; ++cx) {
      if (!map.occupied(cx, cy)) continue;
      const double x0 = cx * cs, x1 = (cx + 1) * cs;
      const double y0 = cy * cs, y1 = (cy + 1) * cs;
      const double dx = std::max({x0 - x, 0.0, x - x1});
      const double dy = std::max({y0 - y, 0.0, y - y1});
      if (std::sqrt(dx * dx + dy * dy) < r_robot) return true;
    }
  }
  return false;
}

double cast_ray(const GridMap& map, double ox, double oy, double angle,
                double d_max) {
  const double cs = map.cell_size();
  const double dirx = std::cos(angle);
  const double diry = std::sin(angle);

  int cx = static_cast<int>(std::floor(ox / cs));
  int cy = static_cast<int>(std::floor(oy / cs));
  if (map.occupied(cx, cy)) return 0.0;

  const double inf = std::numeric_limits<double>::infinity();
  const int step_x = dirx > 0 ? 1 : (dirx < 0 ? -1 : 0);
  const int step_y = diry > 0 ? 1 : (diry < 0 ? -1 : 0);
  double t_max_x = inf, t_delta_x = inf;
  double t_max_y = inf, t_delta_y = inf;
  if (step_x != 0) {
    const double edge = (step_x > 0 ? (cx + 1) * cs : cx * cs);
    t_max_x = (edge - ox) / dirx;
    t_delta_x = cs / std::abs(dirx);
  }
  if (step_y != 0) {
    const double edge = (step_y > 0 ? (cy + 1) * cs : cy * cs);
    t_max_y = (edge - oy) / diry;
    t_delta_y = cs / std::abs(diry);
  }

  while (true) {
    double t;
    if (t_max_x <= t_max_y) {
      t = t_max_x;
      cx += step_x;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      cy += step_y;
      t_max_y += t_delta_y;
    }
    if (t > d_max) return d_max;
    if (map.occupied(cx, cy)) return t;
  }
}

RangeScan range_scan(const GridMap& map, const Pose& pose) {
  RangeScan scan(kScanRays);
  const double start = pose.theta - kScanSpan / 2.0;
  const double inc = kScanSpan / (kScanRays - 1);
  for (int i = 0; i < kScanRays; ++i) {
    scan[static_cast<std::size_t>(i)] =
        cast_ray(map, pose.x, pose.y, start + i * inc);
  }
  return scan;
}

double center_deviation(const RangeScan& scan, CdMode mode) {
  if (scan.size() != kScanRays) {
    throw ContractError("center_deviation: expects a 100-ray scan");
  }
  const int half = kScanRays / 2;
  double right = 0, left = 0;
  for (int i = 0; i < half; ++i) right += scan[static_cast<std::size_t>(i)];
  for (int i = half; i < kScanRays; ++i) {
    left += scan[static_cast<std::size_t>(i)];
  }
  if (mode == CdMode::kMean) {
    right /= half;
    left /= half;
  }
  return std::abs(right - left);
}

Pose spawn(const GridMap& map, Rng& rng, SpawnMode mode, double r_robot) {
  const double cs = map.cell_size();
  if (mode == SpawnMode::kEvalAnchor) {
    const auto& a = map.anchor();
    if (!a) {
      throw ConfigError("spawn: map has no eval anchor ('S' cell)");
    }
    Pose p;
    p.x = (a->cx + 0.5) * cs;
    p.y = (a->cy + 0.5) * cs;
    p.theta = a->theta;
    if (check_collision(map, p.x, p.y, r_robot)) {
      throw ConfigError("spawn: eval anchor is not collision-free");
    }
    return p;
  }

  const auto free = map.free_cells();
  if (free.empty()) throw ConfigError("spawn: map has no free cells");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const auto& [cx, cy] = free[rng.range(free.size())];
    Pose p;
    p.x = (cx + rng.uniform()) * cs;
    p.y = (cy + rng.uniform()) * cs;
    p.theta = rng.uniform() * 2.0 * kPi;
    if (!check_collision(map, p.x, p.y, r_robot)) return p;
  }
  throw ConfigError("spawn: no collision-free pose found after 10000 tries");
}

}  // namespace mznav::sim
