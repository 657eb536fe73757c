#include "mznav/depth/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mznav/sim/pgm.hpp"
#include "mznav/sim/render.hpp"

namespace mznav::depth {

namespace {

constexpr int kScanHeadings = 8;

void split_indices(PairDataset& ds) {
  const int n = ds.size();
  const int hold = n / 10;
  ds.train.clear();
  ds.holdout.clear();
  for (int i = 0; i < n - hold; ++i) ds.train.push_back(i);
  for (int i = n - hold; i < n; ++i) ds.holdout.push_back(i);
}

std::string pair_path(const std::string& dir, int i, const char* suffix) {
  char name[32];
  std::snprintf(name, sizeof(name), "%04d_%s.pgm", i, suffix);
  return dir + "/" + name;
}

}  // namespace

PairDataset collect_pairs(const sim::GridMap& map, int n, Rng& rng,
                          CollectPolicy policy) {
  if (n < 1) throw ContractError("collect_pairs: n must be >= 1");
  std::vector<sim::Pose> poses;
  poses.reserve(static_cast<std::size_t>(n));
  if (policy == CollectPolicy::kRandomSafe) {
    for (int i = 0; i < n; ++i) {
      poses.push_back(sim::spawn(map, rng, sim::SpawnMode::kRandom));
    }
  } else {
    for (const auto& [cx, cy] : map.free_cells()) {
      const double x = (cx + 0.5) * map.cell_size();
      const double y = (cy + 0.5) * map.cell_size();
      if (sim::check_collision(map, x, y)) continue;
      for (int h = 0; h < kScanHeadings; ++h) {
        poses.push_back({x, y, h * (2.0 * kPi / kScanHeadings)});
        if (static_cast<int>(poses.size()) == n) break;
      }
      if (static_cast<int>(poses.size()) == n) break;
    }
    if (static_cast<int>(poses.size()) < n) {
      throw ConfigError("collect_pairs: scan grid has fewer than " +
                        std::to_string(n) + " poses");
    }
  }

  PairDataset ds;
  ds.poses = std::move(poses);
  ds.gray.reserve(ds.poses.size());
  ds.depth.reserve(ds.poses.size());
  for (const auto& p : ds.poses) {
    sim::RenderOutput ro = sim::render_camera(map, p);
    ds.gray.push_back(std::move(ro.gray));
    ds.depth.push_back(std::move(ro.depth));
  }
  split_indices(ds);
  return ds;
}

void save_dataset(const PairDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir + "/index.txt", std::ios::trunc);
  if (!index) throw ConfigError("cannot open for writing: " + dir + "/index.txt");
  for (int i = 0; i < ds.size(); ++i) {
    sim::write_pgm(pair_path(dir, i, "gray"), ds.gray[static_cast<std::size_t>(i)]);
    sim::write_pgm(pair_path(dir, i, "depth"), ds.depth[static_cast<std::size_t>(i)]);
    const sim::Pose& p = ds.poses[static_cast<std::size_t>(i)];
    char line[96];
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", p.x, p.y, p.theta);
    index << line;
  }
  if (!index) throw ConfigError("short write: " + dir + "/index.txt");
}

PairDataset load_dataset(const std::string& dir) {
  std::ifstream index(dir + "/index.txt");
  if (!index) throw ConfigError("cannot open: " + dir + "/index.txt");
  PairDataset ds;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    sim::Pose p;
    if (!(ss >> p.x >> p.y >> p.theta)) {
      throw ConfigError(dir + "/index.txt: malformed pose line");
    }
    ds.poses.push_back(p);
  }
  for (int i = 0; i < static_cast<int>(ds.poses.size()); ++i) {
    ds.gray.push_back(sim::read_pgm(pair_path(dir, i, "gray")));
    ds.depth.push_back(sim::read_pgm(pair_path(dir, i, "depth")));
  }
  split_indices(ds);
  return ds;
}

}  // namespace mznav::depth
