#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgs/error.hpp"
#include "mgs/math.hpp"

namespace mgs {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// FMCW front-end configuration. Defaults model a 77 GHz device; the values
// are configuration, not measured ground truth.
struct RadarParams {
  double wavelength_m = kSpeedOfLight / 77.0e9;
  double bandwidth_hz = 1.0e9;
  double chirp_duration_s = 100.0e-6;
  double antenna_spacing_az_m = 0.5 * kSpeedOfLight / 77.0e9;
  double antenna_spacing_el_m = 0.5 * kSpeedOfLight / 77.0e9;
  double carrier_freq_hz = 77.0e9;

  double chirp_slope() const { return bandwidth_hz / chirp_duration_s; }

  void validate() const {
    if (!(wavelength_m > 0.0) || !(bandwidth_hz > 0.0) || !(chirp_duration_s > 0.0) ||
        !(antenna_spacing_az_m > 0.0) || !(antenna_spacing_el_m > 0.0) ||
        !(carrier_freq_hz > 0.0))
      throw Error(ErrorKind::Config, "radar parameters must be strictly positive");
    const double expected = kSpeedOfLight / carrier_freq_hz;
    if (std::abs(wavelength_m - expected) > 1e-9 * expected)
      throw Error(ErrorKind::Config, "wavelength_m inconsistent with carrier_freq_hz");
  }
};

// Axis metadata of a range x Doppler x angle intensity grid.
// Bin k covers [origin + k*res, origin + (k+1)*res); its center is
// origin + (k + 0.5)*res.
struct HeatmapGrid {
  int range_bins = 1, doppler_bins = 1, angle_bins = 1;
  double range_res_m = 1.0, doppler_res_mps = 1.0, angle_res_rad = 1.0;
  double range_min_m = 0.0, doppler_min_mps = 0.0, angle_min_rad = 0.0;

  bool operator==(const HeatmapGrid& o) const = default;

  void validate() const {
    if (range_bins < 1 || doppler_bins < 1 || angle_bins < 1)
      throw Error(ErrorKind::Config, "heatmap grid needs at least one bin per axis");
    if (!(range_res_m > 0.0) || !(doppler_res_mps > 0.0) || !(angle_res_rad > 0.0))
      throw Error(ErrorKind::Config, "heatmap grid resolutions must be strictly positive");
  }

  std::size_t cells() const {
    return static_cast<std::size_t>(range_bins) * static_cast<std::size_t>(doppler_bins) *
           static_cast<std::size_t>(angle_bins);
  }

  double range_center(int k) const { return range_min_m + (k + 0.5) * range_res_m; }
  double doppler_center(int m) const { return doppler_min_mps + (m + 0.5) * doppler_res_mps; }
  double angle_center(int n) const { return angle_min_rad + (n + 0.5) * angle_res_rad; }

  // Continuous bin coordinate: the value at bin center k maps to exactly k.
  double range_coord(double r) const { return (r - range_min_m) / range_res_m - 0.5; }
  double doppler_coord(double v) const { return (v - doppler_min_mps) / doppler_res_mps - 0.5; }
  double angle_coord(double a) const { return (a - angle_min_rad) / angle_res_rad - 0.5; }

  int range_bin_of(double r) const { return static_cast<int>(std::floor((r - range_min_m) / range_res_m)); }
  int doppler_bin_of(double v) const { return static_cast<int>(std::floor((v - doppler_min_mps) / doppler_res_mps)); }
  int angle_bin_of(double a) const { return static_cast<int>(std::floor((a - angle_min_rad) / angle_res_rad)); }

  double range_max() const { return range_min_m + range_bins * range_res_m; }
  double doppler_max() const { return doppler_min_mps + doppler_bins * doppler_res_mps; }
  double angle_max() const { return angle_min_rad + angle_bins * angle_res_rad; }
};

// Dense non-negative intensity grid; row-major with angle innermost.
struct Heatmap {
  HeatmapGrid grid;
  std::vector<double> values;

  Heatmap() = default;
  explicit Heatmap(const HeatmapGrid& g) : grid(g), values(g.cells(), 0.0) {}

  std::size_t index(int k, int m, int n) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(grid.doppler_bins) +
            static_cast<std::size_t>(m)) *
               static_cast<std::size_t>(grid.angle_bins) +
           static_cast<std::size_t>(n);
  }
  double& at(int k, int m, int n) { return values[index(k, m, n)]; }
  double at(int k, int m, int n) const { return values[index(k, m, n)]; }

  void validate() const {
    grid.validate();
    if (values.size() != grid.cells())
      throw Error(ErrorKind::Shape, "heatmap value count does not match grid");
    for (double v : values)
      if (!(v >= 0.0)) throw Error(ErrorKind::Domain, "heatmap values must be non-negative");
  }
};

// Kinematic tree with canonical bone lengths and T-pose coordinates.
struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<std::pair<int, int>> edges;
  std::vector<double> bone_lengths_m;
  std::vector<Vec3> tpose_positions_m;

  int joint_count() const { return static_cast<int>(joint_names.size()); }

  int index_of(const std::string& name) const {
    for (int i = 0; i < joint_count(); ++i)
      if (joint_names[static_cast<std::size_t>(i)] == name) return i;
    throw Error(ErrorKind::Config, "skeleton has no joint named '" + name + "'");
  }
  int root_index() const { return index_of("pelvis"); }

  // Bone lengths follow from the T-pose coordinates.
  static Skeleton build(std::vector<std::string> names, std::vector<std::pair<int, int>> edges,
                        std::vector<Vec3> tpose) {
    Skeleton sk;
    sk.joint_names = std::move(names);
    sk.edges = std::move(edges);
    sk.tpose_positions_m = std::move(tpose);
    sk.bone_lengths_m.reserve(sk.edges.size());
    for (const auto& [i, j] : sk.edges)
      sk.bone_lengths_m.push_back(
          (sk.tpose_positions_m[static_cast<std::size_t>(i)] -
           sk.tpose_positions_m[static_cast<std::size_t>(j)])
              .norm());
    sk.validate();
    return sk;
  }

  void validate() const {
    const int n = joint_count();
    if (n < 2) throw Error(ErrorKind::Config, "skeleton needs at least two joints");
    if (tpose_positions_m.size() != static_cast<std::size_t>(n))
      throw Error(ErrorKind::Config, "skeleton T-pose count mismatch");
    if (edges.size() != static_cast<std::size_t>(n - 1))
      throw Error(ErrorKind::Config, "skeleton edges must form a spanning tree (|E| = N-1)");
    if (bone_lengths_m.size() != edges.size())
      throw Error(ErrorKind::Config, "skeleton bone length count mismatch");
    // Connectivity check; |E| = N-1 and connected implies acyclic.
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const auto& [i, j] : edges) {
        if (i < 0 || j < 0 || i >= n || j >= n)
          throw Error(ErrorKind::Config, "skeleton edge index out of range");
        const int other = (i == u) ? j : (j == u) ? i : -1;
        if (other >= 0 && !seen[static_cast<std::size_t>(other)]) {
          seen[static_cast<std::size_t>(other)] = 1;
          stack.push_back(other);
        }
      }
    }
    for (int s : seen)
      if (!s) throw Error(ErrorKind::Config, "skeleton edges do not connect all joints");
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double d = (tpose_positions_m[static_cast<std::size_t>(edges[e].first)] -
                        tpose_positions_m[static_cast<std::size_t>(edges[e].second)])
                           .norm();
      if (std::abs(d - bone_lengths_m[e]) > 1e-6)
        throw Error(ErrorKind::Config, "bone length inconsistent with T-pose distance");
    }
  }
};

// 14-joint canonical skeleton, pelvis-rooted. The neck keypoint doubles as
// the head base. Coordinates are meters, pelvis at origin, subject facing
// +x with arms horizontal along +-y.
inline Skeleton default_skeleton() {
  const std::vector<std::string> names = {
      "pelvis",    "neck",      "l_shoulder", "r_shoulder", "l_elbow",
      "r_elbow",   "l_wrist",   "r_wrist",    "l_hip",      "r_hip",
      "l_knee",    "r_knee",    "l_ankle",    "r_ankle"};
  const std::vector<Vec3> tpose = {
      {0.0, 0.00, 0.00},   // pelvis
      {0.0, 0.00, 0.50},   // neck
      {0.0, 0.20, 0.50},   // l_shoulder
      {0.0, -0.20, 0.50},  // r_shoulder
      {0.0, 0.47, 0.50},   // l_elbow
      {0.0, -0.47, 0.50},  // r_elbow
      {0.0, 0.73, 0.50},   // l_wrist
      {0.0, -0.73, 0.50},  // r_wrist
      {0.0, 0.10, -0.05},  // l_hip
      {0.0, -0.10, -0.05}, // r_hip
      {0.0, 0.10, -0.48},  // l_knee
      {0.0, -0.10, -0.48}, // r_knee
      {0.0, 0.10, -0.88},  // l_ankle
      {0.0, -0.10, -0.88}, // r_ankle
  };
  std::vector<std::pair<int, int>> edges = {
      {0, 1},  {1, 2},  {1, 3},  {2, 4},  {3, 5},  {4, 6},  {5, 7},
      {0, 8},  {0, 9},  {8, 10}, {9, 11}, {10, 12}, {11, 13}};
  return Skeleton::build(names, edges, tpose);
}

struct PointCloud {
  struct Point {
    Vec3 position_m;
    double radial_velocity_mps = 0.0;
    double intensity = 0.0;
  };
  std::vector<Point> points;
};

// ---------------------------------------------------------------------------
// MGSH binary heatmap format:
//   magic "MGSH", u32 version=1, u32 R, u32 V, u32 A (little endian),
//   then R*V*A little-endian f32, row-major with angle innermost.
// Axis metadata lives in a `<path>.meta.json` sidecar.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

static_assert(sizeof(float) == 4, "MGSH requires 32-bit float");

}  // namespace detail

inline std::filesystem::path heatmap_meta_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

inline void heatmap_write(const Heatmap& h, const std::filesystem::path& path) {
  h.grid.validate();
  if (h.values.size() != h.grid.cells())
    throw Error(ErrorKind::Shape, "heatmap value count does not match grid");

  std::string buf;
  buf.reserve(20 + 4 * h.values.size());
  buf += "MGSH";
  detail::put_u32_le(buf, 1u);
  detail::put_u32_le(buf, static_cast<std::uint32_t>(h.grid.range_bins));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(h.grid.doppler_bins));
  detail::put_u32_le(buf, static_cast<std::uint32_t>(h.grid.angle_bins));
  for (double v : h.values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32_le(buf, bits);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
  out.close();

  nlohmann::json meta = {
      {"range_bins", h.grid.range_bins},
      {"doppler_bins", h.grid.doppler_bins},
      {"angle_bins", h.grid.angle_bins},
      {"range_res_m", h.grid.range_res_m},
      {"doppler_res_mps", h.grid.doppler_res_mps},
      {"angle_res_rad", h.grid.angle_res_rad},
      {"range_min_m", h.grid.range_min_m},
      {"doppler_min_mps", h.grid.doppler_min_mps},
      {"angle_min_rad", h.grid.angle_min_rad},
  };
  std::ofstream mout(heatmap_meta_path(path), std::ios::trunc);
  if (!mout) throw Error(ErrorKind::Io, "cannot open for writing: " + heatmap_meta_path(path).string());
  mout << meta.dump(2) << "\n";
  if (!mout) throw Error(ErrorKind::Io, "write failed: " + heatmap_meta_path(path).string());
}

inline Heatmap heatmap_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open for reading: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 20) throw Error(ErrorKind::Format, "truncated MGSH header: " + path.string());
  if (buf.compare(0, 4, "MGSH") != 0)
    throw Error(ErrorKind::Format, "bad MGSH magic: " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::uint32_t version = detail::get_u32_le(p + 4);
  if (version != 1u) throw Error(ErrorKind::Format, "unsupported MGSH version");
  const std::uint32_t r = detail::get_u32_le(p + 8);
  const std::uint32_t v = detail::get_u32_le(p + 12);
  const std::uint32_t a = detail::get_u32_le(p + 16);
  const std::size_t count = static_cast<std::size_t>(r) * v * a;
  if (buf.size() != 20 + 4 * count)
    throw Error(ErrorKind::Format, "MGSH payload size does not match header: " + path.string());

  const auto meta_path = heatmap_meta_path(path);
  std::ifstream min(meta_path);
  if (!min) throw Error(ErrorKind::Format, "missing meta sidecar: " + meta_path.string());
  nlohmann::json meta;
  try {
    min >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, "bad meta sidecar: " + std::string(e.what()));
  }

  Heatmap h;
  try {
    h.grid.range_bins = meta.at("range_bins").get<int>();
    h.grid.doppler_bins = meta.at("doppler_bins").get<int>();
    h.grid.angle_bins = meta.at("angle_bins").get<int>();
    h.grid.range_res_m = meta.at("range_res_m").get<double>();
    h.grid.doppler_res_mps = meta.at("doppler_res_mps").get<double>();
    h.grid.angle_res_rad = meta.at("angle_res_rad").get<double>();
    h.grid.range_min_m = meta.at("range_min_m").get<double>();
    h.grid.doppler_min_mps = meta.at("doppler_min_mps").get<double>();
    h.grid.angle_min_rad = meta.at("angle_min_rad").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, "meta sidecar missing fields: " + std::string(e.what()));
  }
  if (h.grid.range_bins != static_cast<int>(r) || h.grid.doppler_bins != static_cast<int>(v) ||
      h.grid.angle_bins != static_cast<int>(a))
    throw Error(ErrorKind::Format, "meta sidecar bins disagree with MGSH header");
  h.grid.validate();

  h.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = detail::get_u32_le(p + 20 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    h.values[i] = static_cast<double>(f);
  }
  return h;
}

// Point cloud text format: one detection per line, "x y z v_r intensity",
// 9 significant digits.
inline void pointcloud_write(const PointCloud& pc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  char line[192];
  for (const auto& pt : pc.points) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %.9g\n", pt.position_m.x,
                  pt.position_m.y, pt.position_m.z, pt.radial_velocity_mps, pt.intensity);
    out << line;
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

inline PointCloud pointcloud_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open for reading: " + path.string());
  PointCloud pc;
  double x, y, z, vr, inten;
  while (in >> x >> y >> z >> vr >> inten) pc.points.push_back({{x, y, z}, vr, inten});
  return pc;
}

}  // namespace mgs
