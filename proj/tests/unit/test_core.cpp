#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <random>

#include "mgs/core.hpp"

using namespace mgs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "mgs_core_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("radar params defaults are self-consistent") {
  RadarParams rp;
  rp.validate();
  CHECK(rp.chirp_slope() == Catch::Approx(1.0e9 / 100.0e-6));
}

TEST_CASE("radar params reject wavelength/carrier mismatch") {
  RadarParams rp;
  rp.wavelength_m *= 1.01;
  CHECK_THROWS_AS(rp.validate(), Error);
}

TEST_CASE("grid bin centers invert exactly") {
  HeatmapGrid g{32, 16, 16, 0.1875, 0.25, 0.1309, 0.5, -2.0, -1.0472};
  for (int k = 0; k < g.range_bins; ++k) CHECK(g.range_bin_of(g.range_center(k)) == k);
  for (int m = 0; m < g.doppler_bins; ++m) CHECK(g.doppler_bin_of(g.doppler_center(m)) == m);
  for (int n = 0; n < g.angle_bins; ++n) CHECK(g.angle_bin_of(g.angle_center(n)) == n);
  CHECK(g.range_coord(g.range_center(7)) == Catch::Approx(7.0));
}

TEST_CASE("single-cell heatmap file is 24 bytes") {
  // 4 magic + 4 version + 3*4 dims + 1*4 payload
  Heatmap h(HeatmapGrid{1, 1, 1, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0});
  const auto path = temp_dir() / "single.mgsh";
  heatmap_write(h, path);
  CHECK(fs::file_size(path) == 24);
}

TEST_CASE("heatmap write/read round-trips bit-exactly") {
  HeatmapGrid g{8, 4, 4, 0.25, 0.5, 0.1, 1.0, -1.0, -0.2};
  Heatmap h(g);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> dist(0.0f, 100.0f);
  for (auto& v : h.values) v = static_cast<double>(dist(rng));
  const auto path = temp_dir() / "roundtrip.mgsh";
  heatmap_write(h, path);
  const Heatmap back = heatmap_read(path);
  REQUIRE(back.grid == g);
  REQUIRE(back.values.size() == h.values.size());
  for (std::size_t i = 0; i < h.values.size(); ++i) CHECK(back.values[i] == h.values[i]);
}

TEST_CASE("heatmap write to nonexistent directory fails") {
  Heatmap h(HeatmapGrid{1, 1, 1, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0});
  CHECK_THROWS_AS(heatmap_write(h, "/nonexistent_dir_mgs/file.mgsh"), Error);
}

TEST_CASE("heatmap read rejects bad magic") {
  const auto path = temp_dir() / "badmagic.mgsh";
  {
    std::ofstream out(path, std::ios::binary);
    out << "XXXX";
    for (int i = 0; i < 20; ++i) out.put(0);
  }
  try {
    heatmap_read(path);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
}

TEST_CASE("heatmap read rejects truncated payload") {
  Heatmap h(HeatmapGrid{2, 2, 2, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0});
  const auto path = temp_dir() / "truncated.mgsh";
  heatmap_write(h, path);
  fs::resize_file(path, 20 + 7 * 4);  // header says 8 floats, keep 7
  try {
    heatmap_read(path);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
}

TEST_CASE("heatmap read requires the meta sidecar") {
  Heatmap h(HeatmapGrid{2, 2, 2, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0});
  const auto path = temp_dir() / "nometa.mgsh";
  heatmap_write(h, path);
  fs::remove(heatmap_meta_path(path));
  try {
    heatmap_read(path);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
}

TEST_CASE("default skeleton is a 14-joint tree with consistent bones") {
  const Skeleton sk = default_skeleton();
  CHECK(sk.joint_count() == 14);
  CHECK(sk.edges.size() == 13);
  CHECK(sk.root_index() == 0);
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const auto& [i, j] = sk.edges[e];
    const double d = (sk.tpose_positions_m[static_cast<std::size_t>(i)] -
                      sk.tpose_positions_m[static_cast<std::size_t>(j)])
                         .norm();
    CHECK(std::abs(d - sk.bone_lengths_m[e]) < 1e-6);
  }
}

TEST_CASE("skeleton validation rejects disconnected edges") {
  Skeleton sk = default_skeleton();
  sk.edges[0] = {1, 2};  // pelvis orphaned, cycle elsewhere
  CHECK_THROWS_AS(sk.validate(), Error);
}

TEST_CASE("pointcloud text round-trip") {
  PointCloud pc;
  pc.points.push_back({{1.25, -0.5, 0.75}, 0.125, 42.0});
  pc.points.push_back({{3.0, 0.0, 0.0}, -1.5, 7.5});
  const auto path = temp_dir() / "cloud.txt";
  pointcloud_write(pc, path);
  const PointCloud back = pointcloud_read(path);
  REQUIRE(back.points.size() == 2);
  CHECK(back.points[0].position_m.x == 1.25);
  CHECK(back.points[1].radial_velocity_mps == -1.5);
}
