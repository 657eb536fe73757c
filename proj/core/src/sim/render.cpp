#include "mznav/sim/render.hpp"

#include <algorithm>
#include <cmath>

namespace mznav::sim {

namespace {

void render_native(const GridMap& map, const Pose& pose, int s,
                   nn::Tensor& gray, nn::Tensor& depth) {
  const double half = s / 2.0;
  for (int i = 0; i < s; ++i) {
    const double alpha = (half - i) * (kCameraFov / s);
    const double d = cast_ray(map, pose.x, pose.y, pose.theta + alpha);
    const double d_perp = d * std::cos(alpha);
    const double band = std::clamp(half / d_perp, 0.0, static_cast<double>(s));
    const double d_clip = std::clamp(d, kNearClip, kDMax);
    const float wall_gray = static_cast<float>(0.2 + 0.8 * (1.0 - d_clip / kDMax));
    const float wall_depth = static_cast<float>(d_clip / kDMax);
    for (int y = 0; y < s; ++y) {
      const bool wall = std::abs(y + 0.5 - half) < band / 2.0;
      const std::int64_t at = static_cast<std::int64_t>(y) * s + i;
      if (wall) {
        gray[at] = wall_gray;
        depth[at] = wall_depth;
      } else {
        gray[at] = y < half ? 0.65f : 0.35f;
        depth[at] = 1.0f;
      }
    }
  }
}

}  // namespace

RenderOutput render_camera(const GridMap& map, const Pose& pose, int size,
                           int supersample) {
  if (size < 2 || supersample < 1) {
    throw ConfigError("render_camera: invalid size or supersample");
  }
  const int s = size * supersample;
  nn::Tensor gray({s, s});
  nn::Tensor depth({s, s});
  render_native(map, pose, s, gray, depth);
  if (supersample == 1) {
    return RenderOutput{std::move(gray), std::move(depth)};
  }

  RenderOutput out;
  out.gray = nn::Tensor({size, size});
  out.depth = nn::Tensor({size, size});
  const float norm = 1.0f / static_cast<float>(supersample * supersample);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      float g = 0, d = 0;
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const std::int64_t at =
              static_cast<std::int64_t>(y * supersample + sy) * s +
              (x * supersample + sx);
          g += gray[at];
          d += depth[at];
        }
      }
      const std::int64_t to = static_cast<std::int64_t>(y) * size + x;
      out.gray[to] = g * norm;
      out.depth[to] = d * norm;
    }
  }
  return out;
}

}  // namespace mznav::sim
