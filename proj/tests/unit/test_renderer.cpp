#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mgs/grad.hpp"
#include "mgs/renderer.hpp"

using namespace mgs;

namespace {

HeatmapGrid test_grid() {
  return HeatmapGrid{32, 16, 16, 0.1875, 0.25, 2.0 * kPi / 3.0 / 16.0, 0.5, -2.0, -kPi / 3.0};
}

GaussianJoint joint_at(const Vec3& p, const Vec3& v, double opacity = 1.0) {
  GaussianJoint j;
  j.position_m = p;
  j.velocity_mps = v;
  j.scale_m = {0.08, 0.08, 0.08};
  j.opacity = opacity;
  j.doppler_features = default_doppler_envelope(16, 2.0);
  return j;
}

struct Argmax {
  int k = 0, m = 0, n = 0;
  double value = 0.0;
};

Argmax argmax_of(const Heatmap& h) {
  Argmax best;
  for (int k = 0; k < h.grid.range_bins; ++k)
    for (int m = 0; m < h.grid.doppler_bins; ++m)
      for (int n = 0; n < h.grid.angle_bins; ++n)
        if (h.at(k, m, n) > best.value) best = {k, m, n, h.at(k, m, n)};
  return best;
}

}  // namespace

TEST_CASE("signal modulation phase follows the chirp substitution") {
  RadarParams rp;  // B = 1 GHz, T_c = 100 us
  const auto m = signal_modulation(rp, {3.0, 0.0, 0.0});
  CHECK(std::abs(m) == Catch::Approx(1.0));
  // f0 * tau = (2 S r / c)(2 r / c), about 4e-3 cycles at r = 3 m
  const double cycles = 4.0 * rp.chirp_slope() * 9.0 / (kSpeedOfLight * kSpeedOfLight);
  CHECK(cycles == Catch::Approx(4.0e-3).epsilon(0.005));
  CHECK(m.real() == Catch::Approx(std::cos(2.0 * kPi * cycles)));
  CHECK(m.imag() == Catch::Approx(std::sin(2.0 * kPi * cycles)));
  CHECK_THROWS_AS(signal_modulation(rp, {0, 0, 0}), Error);
}

TEST_CASE("signal modulation full-cycle phase is unity") {
  RadarParams rp;
  // choose r so that 4 S r^2 / c^2 is an integer number of cycles
  const double slope = rp.chirp_slope();
  const double r = std::sqrt(1.0 * kSpeedOfLight * kSpeedOfLight / (4.0 * slope));
  const auto m = signal_modulation(rp, {r, 0.0, 0.0});
  CHECK(m.real() == Catch::Approx(1.0));
  CHECK(m.imag() == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("doppler modulation") {
  RadarParams rp;
  CHECK(doppler_modulation(rp, {3, 0, 0}, {0, 0, 0}).real() == Catch::Approx(1.0));
  // tangential motion has no radial component
  const auto t = doppler_modulation(rp, {3, 0, 0}, {0, 1.7, 0});
  CHECK(t.real() == Catch::Approx(1.0));
  CHECK(t.imag() == Catch::Approx(0.0).margin(1e-12));

  RadarParams custom;
  custom.carrier_freq_hz = kSpeedOfLight / 0.004;
  custom.wavelength_m = 0.004;
  const auto half = doppler_modulation(custom, {1, 0, 0}, {0.001, 0, 0});
  CHECK(half.real() == Catch::Approx(-1.0));
  CHECK(half.imag() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("antenna phase") {
  RadarParams rp;
  const auto b = antenna_phase(rp, {4.0, 0.0, 0.0});
  CHECK(b.real() == Catch::Approx(1.0));
  CHECK(std::abs(antenna_phase(rp, {2.0, 1.0, -0.5})) == Catch::Approx(1.0));

  // l_az = lambda/2 and az = pi/6 gives a quarter-cycle
  const double az = kPi / 6.0;
  const auto q = antenna_phase(rp, {4.0 * std::cos(az), 4.0 * std::sin(az), 0.0});
  CHECK(q.real() == Catch::Approx(0.0).margin(1e-12));
  CHECK(q.imag() == Catch::Approx(1.0));
}

TEST_CASE("path loss") {
  CHECK(path_loss({1, 0, 0}) == Catch::Approx(1.0));
  CHECK(path_loss({2, 0, 0}) == Catch::Approx(0.0625));
  CHECK(path_loss({1.3, 0.4, -0.2}) / path_loss({2.6, 0.8, -0.4}) == Catch::Approx(16.0));
  CHECK_THROWS_AS(path_loss({0.05, 0, 0}), Error);
}

TEST_CASE("render of zero-opacity frame is all zero") {
  DiprFrame f;
  f.joints.push_back(joint_at({3, 0, 0}, {0, 0, 0}, 0.0));
  f.joints.push_back(joint_at({4, 0.5, 0}, {0.5, 0, 0}, 0.0));
  const Heatmap h = render(f, RadarParams{}, test_grid(), RenderKernelParams{});
  for (double v : h.values) CHECK(v == 0.0);
}

TEST_CASE("single joint peaks at the bins containing its state") {
  const auto grid = test_grid();
  DiprFrame f;
  // keep the azimuth and Doppler coordinates off bin boundaries
  f.joints.push_back(joint_at({3.0, 0.02, 0.0}, {1.05, 0.0, 0.0}));
  const Heatmap h = render(f, RadarParams{}, grid, RenderKernelParams{});
  const auto peak = argmax_of(h);
  const auto sph = cartesian_to_spherical(f.joints[0].position_m);
  const double v_r = radial_velocity(f.joints[0].position_m, f.joints[0].velocity_mps);
  CHECK(peak.k == grid.range_bin_of(sph.range));
  CHECK(peak.m == grid.doppler_bin_of(v_r));
  CHECK(peak.n == grid.angle_bin_of(sph.azimuth));
}

TEST_CASE("complex field is linear in opacity") {
  const auto grid = test_grid();
  // identical azimuth and radial velocity, both ranges on bin centers, so the
  // two returns share every kernel factor and differ only in amplitude
  const double az = 0.0131;
  const double r1 = grid.range_center(8);
  const double r2 = grid.range_center(24);
  const Vec3 p1 = spherical_to_cartesian(r1, az, 0.0);
  const Vec3 p2 = spherical_to_cartesian(r2, az, 0.0);
  DiprFrame f;
  f.joints.push_back(joint_at(p1, p1 / r1 * 0.4, 0.7));
  f.joints.push_back(joint_at(p2, p2 / r2 * 0.4, 1.4));
  const Heatmap h = render(f, RadarParams{}, grid, RenderKernelParams{});

  double peak1 = 0.0, peak2 = 0.0;
  for (int k = 0; k < grid.range_bins; ++k)
    for (int m = 0; m < grid.doppler_bins; ++m)
      for (int n = 0; n < grid.angle_bins; ++n) {
        if (grid.range_center(k) < 0.5 * (r1 + r2))
          peak1 = std::max(peak1, h.at(k, m, n));
        else
          peak2 = std::max(peak2, h.at(k, m, n));
      }
  // scaling one joint's opacity scales its contribution exactly
  DiprFrame f2 = f;
  f2.joints[1].opacity *= 3.0;
  const Heatmap h2 = render(f2, RadarParams{}, grid, RenderKernelParams{});
  double peak2b = 0.0;
  for (int k = 0; k < grid.range_bins; ++k)
    for (int m = 0; m < grid.doppler_bins; ++m)
      for (int n = 0; n < grid.angle_bins; ++n)
        if (grid.range_center(k) >= 0.5 * (r1 + r2)) peak2b = std::max(peak2b, h2.at(k, m, n));
  CHECK(peak2b == Catch::Approx(3.0 * peak2).epsilon(1e-12));
  // and the amplitude ratio between the joints follows beta / r^4
  const double expected =
      (f.joints[1].opacity / std::pow(r2, 4)) / (f.joints[0].opacity / std::pow(r1, 4));
  CHECK(peak2 / peak1 == Catch::Approx(expected).epsilon(1e-6));
}

TEST_CASE("render rejects joints outside coverage, naming them") {
  const auto grid = test_grid();
  DiprFrame f;
  f.joints.push_back(joint_at({3, 0, 0}, {0, 0, 0}));
  f.joints.push_back(joint_at({9.0, 0, 0}, {0, 0, 0}));  // beyond range_max
  try {
    render(f, RadarParams{}, grid, RenderKernelParams{});
    FAIL("expected render error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Render);
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("render is deterministic") {
  const auto grid = test_grid();
  std::mt19937_64 rng(33);
  const DiprFrame f = detail::random_gradcheck_frame(default_skeleton(), grid, 16, rng);
  const Heatmap a = render(f, RadarParams{}, grid, RenderKernelParams{});
  const Heatmap b = render(f, RadarParams{}, grid, RenderKernelParams{});
  CHECK(a.values == b.values);
}

TEST_CASE("incoherent accumulation dominates coherent magnitudes") {
  const auto grid = test_grid();
  std::mt19937_64 rng(35);
  const DiprFrame f = detail::random_gradcheck_frame(default_skeleton(), grid, 16, rng);
  RenderKernelParams kp;
  const Heatmap coh = render(f, RadarParams{}, grid, kp);
  kp.coherent = false;
  const Heatmap inc = render(f, RadarParams{}, grid, kp);
  for (std::size_t i = 0; i < coh.values.size(); ++i)
    CHECK(inc.values[i] >= coh.values[i] - 1e-12);
}

TEST_CASE("zero adjoint gives zero gradients") {
  const auto grid = test_grid();
  DiprFrame f;
  f.joints.push_back(joint_at({3, 0.1, 0.2}, {0.5, 0.2, 0}));
  std::vector<double> adjoint(grid.cells(), 0.0);
  const auto g = render_with_gradients(f, RadarParams{}, grid, RenderKernelParams{}, adjoint);
  CHECK(g.joints[0].position.norm() == 0.0);
  CHECK(g.joints[0].opacity == 0.0);
  for (double d : g.joints[0].doppler_features) CHECK(d == 0.0);
}

TEST_CASE("opacity gradient matches beta-homogeneity") {
  const auto grid = test_grid();
  DiprFrame f;
  f.joints.push_back(joint_at({3.1, 0.07, -0.1}, {0.6, 0.1, 0}, 1.3));
  const Heatmap h = render(f, RadarParams{}, grid, RenderKernelParams{});
  std::vector<double> adjoint(grid.cells(), 1.0);
  const auto g = render_with_gradients(f, RadarParams{}, grid, RenderKernelParams{}, adjoint);
  double mass = 0.0;
  for (double v : h.values) mass += v;
  CHECK(g.joints[0].opacity == Catch::Approx(mass / f.joints[0].opacity).epsilon(1e-9));
}

namespace {

// Finite-difference comparison over the pure render functional
// f(x) = <adjoint, |render(x)|>.
struct FdStats {
  double max_rel = 0.0;
  int checked = 0;
  int excluded = 0;
};

FdStats fd_check_render(const DiprFrame& frame, const HeatmapGrid& grid,
                        const RenderKernelParams& kp, int coords, std::uint64_t seed) {
  const RadarParams rp;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> adjoint(grid.cells());
  for (auto& a : adjoint) a = u(rng);

  const ParamLayout layout = ParamLayout::of(frame);
  const std::vector<double> x0 = flatten_frame(frame);
  const auto analytic_frame = render_with_gradients(frame, rp, grid, kp, adjoint);
  const std::vector<double> analytic = flatten_gradients(analytic_frame);

  auto f = [&](std::span<const double> x) {
    const Heatmap h = render(unflatten_frame(layout, x), rp, grid, kp);
    double acc = 0.0;
    for (std::size_t i = 0; i < h.values.size(); ++i) acc += adjoint[i] * h.values[i];
    return acc;
  };
  const double base_value = f(x0);

  FdStats stats;
  std::uniform_int_distribution<std::size_t> pick(0, x0.size() - 1);
  for (int c = 0; c < coords; ++c) {
    const std::size_t idx = pick(rng);
    if (std::abs(analytic[idx]) <= 1e-8) continue;
    const auto coord = layout.locate(idx);
    const double h = 1e-6 * std::max(std::abs(x0[idx]), ParamLayout::typical_scale(coord.group));

    std::vector<double> xp = x0;
    xp[idx] += h;
    const auto side_p = render_side_info(unflatten_frame(layout, xp), rp, grid, kp);
    xp[idx] = x0[idx] - h;
    const auto side_m = render_side_info(unflatten_frame(layout, xp), rp, grid, kp);
    if (!(side_p == side_m)) {
      ++stats.excluded;
      continue;
    }
    const double fd = finite_difference_oracle(f, x0, idx, h);
    const double fd2 = finite_difference_oracle(f, x0, idx, 0.5 * h);
    const double ref = std::max({std::abs(analytic[idx]), std::abs(fd), std::abs(fd2)});
    if (std::abs(fd - fd2) > 0.2e-4 * ref || fd_noise_floor(base_value, h) > 0.25e-4 * ref) {
      ++stats.excluded;
      continue;
    }
    stats.max_rel =
        std::max(stats.max_rel, std::abs(analytic[idx] - fd) / std::max(std::abs(analytic[idx]),
                                                                        std::abs(fd)));
    ++stats.checked;
  }
  return stats;
}

}  // namespace

TEST_CASE("render gradients match finite differences") {
  const auto grid = test_grid();
  std::mt19937_64 rng(101);
  RenderKernelParams kp;
  FdStats total;
  for (int scene = 0; scene < 4; ++scene) {
    const DiprFrame f = detail::random_gradcheck_frame(default_skeleton(), grid, 16, rng);
    const auto stats = fd_check_render(f, grid, kp, 150, 500 + static_cast<std::uint64_t>(scene));
    total.max_rel = std::max(total.max_rel, stats.max_rel);
    total.checked += stats.checked;
    total.excluded += stats.excluded;
  }
  INFO("checked " << total.checked << ", excluded " << total.excluded);
  CHECK(total.checked > 200);
  CHECK(total.excluded < total.checked / 5);
  CHECK(total.max_rel <= 1e-4);
}

TEST_CASE("incoherent render gradients match finite differences") {
  const auto grid = test_grid();
  std::mt19937_64 rng(707);
  RenderKernelParams kp;
  kp.coherent = false;
  const DiprFrame f = detail::random_gradcheck_frame(default_skeleton(), grid, 16, rng);
  const auto stats = fd_check_render(f, grid, kp, 200, 99);
  INFO("checked " << stats.checked << ", excluded " << stats.excluded);
  CHECK(stats.checked > 50);
  CHECK(stats.max_rel <= 1e-4);
}
