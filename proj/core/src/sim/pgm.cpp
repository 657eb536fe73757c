#include "mznav/sim/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "mznav/common.hpp"

namespace mznav::sim {

void write_pgm(const std::string& path, const nn::Tensor& frame) {
  if (frame.rank() != 2) throw ContractError("write_pgm: expects {H,W}");
  const int h = frame.dim(0), w = frame.dim(1);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = frame[static_cast<std::int64_t>(y) * w + x];
      const int q = static_cast<int>(std::lround(v * 255.0));
      row[static_cast<std::size_t>(x)] =
          static_cast<unsigned char>(std::clamp(q, 0, 255));
    }
    f.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!f) throw ConfigError("short write: " + path);
}

nn::Tensor read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw ConfigError(path + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 255) {
    throw ConfigError(path + ": unsupported PGM header");
  }
  f.get();  // single whitespace after header
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size()));
  if (!f) throw ConfigError(path + ": truncated PGM payload");
  nn::Tensor out({h, w});
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<float>(buf[static_cast<std::size_t>(i)]) / 255.0f;
  }
  return out;
}

}  // namespace mznav::sim
