#pragma once

#include "mznav/nn/tensor.hpp"
#include "mznav/sim/geometry.hpp"
#include "mznav/sim/map.hpp"

namespace mznav::sim {

constexpr double kCameraFov = 80.0 * kPi / 180.0;

struct RenderOutput {
  nn::Tensor gray;   // {size, size}, intensities in [0, 1]
  nn::Tensor depth;  // {size, size}, clamp(d, 0.05, 8)/8 on walls, 1 elsewhere
};

// Column raycaster over the 80-degree FOV. Column angles are
// (size/2 - i) * fov/size so the middle column (index size/2) looks exactly
// along the heading. Per column: perpendicular distance d*cos(alpha) sets the
// wall band height clamp(size/2 / d_perp, 0, size); wall intensity is
// 0.2 + 0.8*(1 - clamp(d, 0.05, 8)/8); ceiling 0.65 above the band and floor
// 0.35 below. supersample > 1 renders at size*supersample and box-averages
// down, mirroring a high-res render-then-downsample path.
RenderOutput render_camera(const GridMap& map, const Pose& pose,
                           int size = 84, int supersample = 1);

}  // namespace mznav::sim
