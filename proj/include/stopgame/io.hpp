#pragma once

// Serialization: value fields as CSV, masks and heatmaps as binary PGM with
// a JSON sidecar, and atomically published output bundles.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"

#include "stopgame/errors.hpp"
#include "stopgame/regions.hpp"
#include "stopgame/valuation.hpp"

namespace stopgame::io {

namespace fs = std::filesystem;

/// Shortest round-trip decimal form; locale independent.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json grid_json(const Grid& g) {
  nlohmann::json j;
  j["lower"] = g.lower().to_vector();
  j["upper"] = g.upper().to_vector();
  j["counts"] = g.counts();
  return j;
}

inline Grid grid_from_json(const nlohmann::json& j) {
  auto pt = [](const std::vector<double>& v) {
    Point p(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<int>(i)] = v[i];
    return p;
  };
  return Grid(pt(j.at("lower").get<std::vector<double>>()), pt(j.at("upper").get<std::vector<double>>()),
              j.at("counts").get<std::vector<int>>());
}

/// Header x1..xd,value,std_err,trunc_bound; one row per cell, axis 0 fastest.
inline std::string value_field_csv(const ValueField& v) {
  std::ostringstream os;
  const int d = v.grid.dim();
  for (int i = 0; i < d; ++i) os << 'x' << (i + 1) << ',';
  os << "value,std_err,trunc_bound\n";
  for (std::size_t c = 0; c < v.size(); ++c) {
    const Point x = v.grid.center(c);
    for (int i = 0; i < d; ++i) os << format_double(x[i]) << ',';
    os << format_double(v.values[c]) << ',' << format_double(v.std_errs[c]) << ','
       << format_double(v.trunc_bounds.empty() ? 0.0 : v.trunc_bounds[c]) << '\n';
  }
  return os.str();
}

/// Writes via a sibling temporary and rename.
inline void write_file(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// PGM

/// Image layout for a 1-D or 2-D grid: width = counts[0], height = counts[1]
/// (1 for a line), top row = largest x2.
inline std::pair<int, int> image_shape(const Grid& g) {
  if (g.dim() > 2) throw ShapeError("pgm: only 1-D and 2-D grids have an image form");
  return {g.counts()[0], g.dim() == 2 ? g.counts()[1] : 1};
}

inline std::string pgm_bytes(const Grid& g, const std::vector<std::uint8_t>& pixels_by_cell) {
  auto [w, h] = image_shape(g);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(w) * h);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col) {
      std::vector<int> m = {col};
      if (g.dim() == 2) m.push_back(h - 1 - row);
      out.push_back(static_cast<char>(pixels_by_cell[g.flat_index(m)]));
    }
  return out;
}

inline nlohmann::json sidecar(const Grid& g, const std::string& kind) {
  nlohmann::json j = grid_json(g);
  j["kind"] = kind;
  j["layout"] = "row 0 = largest x2; column 0 = smallest x1";
  return j;
}

/// Mask as P5 (255 = member) plus `<path>.json` with the bounding box.
inline void write_mask_pgm(const fs::path& path, const Mask& m) {
  std::vector<std::uint8_t> px(m.bits.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = m.bits[i] ? 255 : 0;
  write_file(path, pgm_bytes(m.grid, px));
  nlohmann::json j = sidecar(m.grid, "mask");
  j["outside"] = m.outside;
  write_file(fs::path(path.string() + ".json"), j.dump(2) + "\n");
}

/// Linear gray scale between the field's min and max.
inline void write_heatmap_pgm(const fs::path& path, const Grid& g, const std::vector<double>& values) {
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  std::vector<std::uint8_t> px(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    px[i] = hi > lo ? static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - lo) / (hi - lo))) : 128;
  write_file(path, pgm_bytes(g, px));
  nlohmann::json j = sidecar(g, "heatmap");
  j["min"] = lo;
  j["max"] = hi;
  write_file(fs::path(path.string() + ".json"), j.dump(2) + "\n");
}

/// Reads a P5 mask and its sidecar; pixels >= 128 are members.
inline Mask read_mask_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::istringstream is(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic;
  auto skip_comments = [&is] {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      is >> std::ws;
    }
  };
  skip_comments();
  is >> w;
  skip_comments();
  is >> h;
  skip_comments();
  is >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw Error("mask " + path.string() + ": not an 8-bit P5 image");
  is.get();
  const auto offset = static_cast<std::size_t>(is.tellg());
  if (bytes.size() < offset + static_cast<std::size_t>(w) * h) throw Error("mask " + path.string() + ": truncated");
  const fs::path side = path.string() + ".json";
  if (!fs::exists(side)) throw Error("mask " + path.string() + ": missing sidecar " + side.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(side));
  } catch (const nlohmann::json::exception& e) {
    throw Error("mask sidecar " + side.string() + ": " + e.what());
  }
  const Grid g = grid_from_json(j);
  auto [gw, gh] = image_shape(g);
  if (gw != w || gh != h) throw ShapeError("mask " + path.string() + ": image size does not match sidecar grid");
  Mask m = Mask::filled(g, false, j.value("outside", false));
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col) {
      std::vector<int> idx = {col};
      if (g.dim() == 2) idx.push_back(h - 1 - row);
      m.bits[g.flat_index(idx)] = static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(row) * w + col]) >= 128;
    }
  return m;
}

// ---------------------------------------------------------------------------
// Bundles

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return os.str();
}

/// Files are staged in a hidden directory and published by one rename to
/// <root>/<name>/<timestamp>[-k].
class Bundle {
 public:
  Bundle(const fs::path& root, const std::string& name) : final_parent_(root / name) {
    fs::create_directories(final_parent_);
    stage_ = final_parent_ / (".staging-" + utc_timestamp() + "-" + std::to_string(::getpid()));
    fs::create_directories(stage_);
  }
  Bundle(const Bundle&) = delete;
  Bundle& operator=(const Bundle&) = delete;
  ~Bundle() {
    if (!published_) {
      std::error_code ec;
      fs::remove_all(stage_, ec);
    }
  }

  void add(const std::string& rel, const std::string& bytes) {
    write_file(stage_ / rel, bytes);
    files_.push_back(rel);
  }
  void add_csv(const std::string& rel, const ValueField& v) { add(rel, value_field_csv(v)); }
  void add_mask(const std::string& rel, const Mask& m) {
    if (m.grid.dim() > 2) return;
    write_mask_pgm(stage_ / rel, m);
    files_.push_back(rel);
    files_.push_back(rel + ".json");
  }
  void add_heatmap(const std::string& rel, const Grid& g, const std::vector<double>& values) {
    if (g.dim() > 2 || values.empty()) return;
    write_heatmap_pgm(stage_ / rel, g, values);
    files_.push_back(rel);
    files_.push_back(rel + ".json");
  }
  const std::vector<std::string>& files() const noexcept { return files_; }

  fs::path publish() {
    const std::string ts = utc_timestamp();
    fs::path dest = final_parent_ / ts;
    for (int k = 1; fs::exists(dest); ++k) dest = final_parent_ / (ts + "-" + std::to_string(k));
    fs::rename(stage_, dest);
    published_ = true;
    return dest;
  }

 private:
  fs::path final_parent_;
  fs::path stage_;
  std::vector<std::string> files_;
  bool published_ = false;
};

}  // namespace stopgame::io
