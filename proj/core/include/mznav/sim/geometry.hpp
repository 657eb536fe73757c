#pragma once

#include <vector>

#include "mznav/common.hpp"
#include "mznav/sim/map.hpp"

namespace mznav::sim {

struct Pose {
  double x = 0;
  double y = 0;
  double theta = 0;  // radians in [0, 2pi)
};

constexpr int kScanRays = 100;
constexpr double kScanSpan = 1.5 * kPi;  // 270 degrees

using RangeScan = std::vector<double>;

// Unicycle update; no collision resolution here.
Pose step_kinematics(const Pose& p, double v, double omega, double dt);

// True iff the distance from (x, y) to the nearest occupied-cell boundary is
// strictly less than r_robot.
bool check_collision(const GridMap& map, double x, double y,
                     double r_robot = kRobotRadius);

// Exact grid traversal (Amanatides-Woo) from a free-space origin; returns the
// distance to the first occupied cell boundary, capped at d_max.
double cast_ray(const GridMap& map, double ox, double oy, double angle,
                double d_max = kDMax);

// 100 rays, evenly spaced over [theta - 3pi/4, theta + 3pi/4], both ends
// inclusive; index 0 is the -135 degree (right-hand) ray.
RangeScan range_scan(const GridMap& map, const Pose& pose);

enum class CdMode { kMean, kSum };

// |mean(right half) - mean(left half)| of the scan. CdMode::kSum preserves
// the literal raw-sum reading behind the `cd_mode=sum` config flag.
double center_deviation(const RangeScan& scan, CdMode mode = CdMode::kMean);

enum class SpawnMode { kRandom, kEvalAnchor };

// Random mode: uniform over free cells and position within the cell, heading
// uniform in [0, 2pi), rejection-sampled until collision-free. Eval mode: the
// map's fixed anchor (cell center + spawn_theta); throws ConfigError if the
// map has none.
Pose spawn(const GridMap& map, Rng& rng, SpawnMode mode,
           double r_robot = kRobotRadius);

}  // namespace mznav::sim
