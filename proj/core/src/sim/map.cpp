#include "mznav/sim/map.hpp"

#include <fstream>
#include <sstream>

namespace mznav::sim {

namespace {

[[noreturn]] void parse_error(int line, int col, const std::string& what) {
  throw ConfigError("map parse error at line " + std::to_string(line) +
                    ", col " + std::to_string(col) + ": " + what);
}

}  // namespace

GridMap GridMap::parse(const std::string& text) {
  GridMap m;
  std::vector<std::string> rows;
  std::optional<double> spawn_theta;
  int line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      parse_error(line_no, static_cast<int>(line.size()), "CR line ending");
    }
    if (line.empty()) continue;
    if (line.find('=') != std::string::npos) {
      const auto eq = line.find('=');
      const std::string key = line.substr(0, eq);
      if (key != "spawn_theta") {
        parse_error(line_no, 1, "unknown metadata key '" + key + "'");
      }
      try {
        std::size_t used = 0;
        spawn_theta = std::stod(line.substr(eq + 1), &used);
        if (used != line.size() - eq - 1) throw std::invalid_argument("");
      } catch (const std::exception&) {
        parse_error(line_no, static_cast<int>(eq) + 2,
                    "spawn_theta is not a number");
      }
      continue;
    }
    rows.push_back(line);
    const int r = static_cast<int>(rows.size()) - 1;
    for (std::size_t c = 0; c < line.size(); ++c) {
      const char ch = line[c];
      if (ch == '\t') parse_error(line_no, static_cast<int>(c) + 1, "tab");
      if (ch != '#' && ch != '.' && ch != 'S') {
        parse_error(line_no, static_cast<int>(c) + 1,
                    std::string("illegal character '") + ch + "'");
      }
      if (ch == 'S') {
        if (m.anchor_) {
          parse_error(line_no, static_cast<int>(c) + 1,
                      "multiple spawn anchors");
        }
        m.anchor_ = SpawnAnchor{static_cast<int>(c), r, 0.0};
      }
    }
  }

  if (rows.empty()) throw ConfigError("map parse error: empty map");
  m.height_ = static_cast<int>(rows.size());
  m.width_ = static_cast<int>(rows[0].size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != m.width_) {
      parse_error(static_cast<int>(r) + 1,
                  static_cast<int>(rows[r].size()) + 1,
                  "map not rectangular");
    }
  }

  m.occ_.assign(static_cast<std::size_t>(m.width_) * m.height_, 0);
  for (int r = 0; r < m.height_; ++r) {
    for (int c = 0; c < m.width_; ++c) {
      const bool wall = rows[static_cast<std::size_t>(r)][
          static_cast<std::size_t>(c)] == '#';
      m.occ_[static_cast<std::size_t>(r) * m.width_ + c] = wall ? 1 : 0;
      if (!wall) {
        ++m.free_count_;
        if (r == 0 || c == 0 || r == m.height_ - 1 || c == m.width_ - 1) {
          parse_error(r + 1, c + 1, "map not enclosed");
        }
      }
    }
  }
  if (m.free_count_ == 0) {
    throw ConfigError("map parse error: no free cells");
  }

  if (m.anchor_ && !spawn_theta) {
    throw ConfigError("map parse error: anchor 'S' without spawn_theta line");
  }
  if (!m.anchor_ && spawn_theta) {
    throw ConfigError("map parse error: spawn_theta without anchor 'S'");
  }
  if (m.anchor_) m.anchor_->theta = wrap_angle(*spawn_theta);
  return m;
}

GridMap GridMap::load_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open map file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  try {
    return parse(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<std::pair<int, int>> GridMap::free_cells() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(free_count_));
  for (int cy = 0; cy < height_; ++cy) {
    for (int cx = 0; cx < width_; ++cx) {
      if (!occupied(cx, cy)) out.emplace_back(cx, cy);
    }
  }
  return out;
}

}  // namespace mznav::sim
