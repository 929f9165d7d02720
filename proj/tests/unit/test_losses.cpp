#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mgs/grad.hpp"
#include "mgs/losses.hpp"

using namespace mgs;

namespace {

HeatmapGrid test_grid() {
  return HeatmapGrid{32, 16, 16, 0.1875, 0.25, 2.0 * kPi / 3.0 / 16.0, 0.5, -2.0, -kPi / 3.0};
}

Heatmap random_heatmap(const HeatmapGrid& g, std::uint64_t seed) {
  Heatmap h(g);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : h.values) v = u(rng) * u(rng);
  return h;
}

DiprFrame tpose_frame(const Skeleton& sk, const Vec3& anchor, const Vec3& velocity) {
  CoarseState cs;
  cs.positions_m = {anchor};
  cs.velocities_mps = {velocity};
  cs.weights = {1.0};
  DiprFrame f = init_from_coarse(sk, cs);
  for (auto& j : f.joints) j.velocity_mps = velocity;
  return f;
}

}  // namespace

TEST_CASE("threshold convention: 100 values, T = 10% selects the 10th largest") {
  std::vector<double> values(100);
  for (int i = 0; i < 100; ++i) values[static_cast<std::size_t>(i)] = i + 1.0;
  CHECK(top_fraction_threshold(values, 0.10) == 91.0);
  CHECK(top_fraction_threshold(values, 1.0) == 1.0);
  CHECK(top_fraction_threshold(values, 0.001) == 100.0);
}

TEST_CASE("recon loss of identical nonzero heatmaps vanishes") {
  const Heatmap h = random_heatmap(test_grid(), 5);
  LossWeights w;
  CHECK(recon_loss(h, h, w) < 1e-9);
}

TEST_CASE("recon loss is symmetric and bounded") {
  LossWeights w;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Heatmap a = random_heatmap(test_grid(), 100 + seed);
    const Heatmap b = random_heatmap(test_grid(), 200 + seed);
    const double ab = recon_loss(a, b, w);
    const double ba = recon_loss(b, a, w);
    CHECK(ab == Catch::Approx(ba).margin(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("recon loss of disjoint saturated masks approaches one") {
  HeatmapGrid g{10, 10, 1, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
  Heatmap a(g), b(g);
  // top-10% supports are disjoint and sharply separated
  for (int i = 0; i < 10; ++i) {
    a.values[static_cast<std::size_t>(i)] = 1000.0;
    b.values[static_cast<std::size_t>(99 - i)] = 1000.0;
  }
  for (int i = 10; i < 90; ++i) {
    a.values[static_cast<std::size_t>(i)] = 1e-6;
    b.values[static_cast<std::size_t>(99 - i)] = 1e-6;
  }
  LossWeights w;
  w.softness_tau = 0.01;
  CHECK(recon_loss(a, b, w) > 0.99);
}

TEST_CASE("recon loss against an all-zero observation") {
  const auto g = test_grid();
  const Heatmap zero(g);
  const Heatmap h = random_heatmap(g, 9);
  LossWeights w;
  CHECK(recon_loss(h, zero, w) == 1.0);
  CHECK(recon_loss(zero, h, w) == 1.0);
  CHECK(recon_loss(zero, zero, w) == 0.0);
}

TEST_CASE("recon loss rejects grid mismatch") {
  Heatmap a(test_grid());
  Heatmap b(HeatmapGrid{4, 4, 4, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0});
  CHECK_THROWS_AS(recon_loss(a, b, LossWeights{}), Error);
}

TEST_CASE("bone loss basics") {
  const Skeleton sk = default_skeleton();
  DiprFrame f = tpose_frame(sk, {3, 0, 0}, {0, 0, 0});
  CHECK(bone_loss(f, sk) < 1e-12);

  // stretch one bone by 0.1 m along its direction
  const auto& [i, j] = sk.edges[0];
  const Vec3 d = f.joints[static_cast<std::size_t>(i)].position_m -
                 f.joints[static_cast<std::size_t>(j)].position_m;
  f.joints[static_cast<std::size_t>(i)].position_m += d / d.norm() * 0.1;
  CHECK(bone_loss(f, sk) == Catch::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("bone loss is invariant under rigid motion") {
  const Skeleton sk = default_skeleton();
  DiprFrame f = tpose_frame(sk, {3, 0.2, 0}, {0, 0, 0});
  // perturb to get a nonzero loss
  f.joints[3].position_m += Vec3{0.05, -0.02, 0.08};
  const double base = bone_loss(f, sk);

  const Mat3 rot = Quat::from_axis_angle({0.3, 1.0, -0.2}, 0.7).to_rotation();
  DiprFrame moved = f;
  for (auto& j : moved.joints) j.position_m = rot * j.position_m + Vec3{0.4, -0.1, 0.25};
  CHECK(bone_loss(moved, sk) == Catch::Approx(base).epsilon(1e-9));
}

TEST_CASE("velocity loss basics") {
  const Skeleton sk = default_skeleton();
  DiprFrame f = tpose_frame(sk, {3, 0, 0}, {0.7, -0.2, 0.1});
  CHECK(velocity_loss(f, sk) < 1e-12);  // common velocity

  // relative velocity perpendicular to the bone contributes nothing; the
  // wrist is a leaf joint with a single bone along y
  const int wrist = sk.index_of("l_wrist");
  DiprFrame g = tpose_frame(sk, {3, 0, 0}, {0, 0, 0});
  g.joints[static_cast<std::size_t>(wrist)].velocity_mps = {0.5, 0.0, 0.0};
  CHECK(velocity_loss(g, sk) < 1e-12);

  // relative velocity along the bone contributes its square
  DiprFrame e = tpose_frame(sk, {3, 0, 0}, {0, 0, 0});
  e.joints[static_cast<std::size_t>(wrist)].velocity_mps = {0.0, 0.2, 0.0};
  CHECK(velocity_loss(e, sk) == Catch::Approx(0.04).epsilon(1e-9));
}

TEST_CASE("velocity loss rejects coincident adjacent joints") {
  const Skeleton sk = default_skeleton();
  DiprFrame f = tpose_frame(sk, {3, 0, 0}, {0, 0, 0});
  f.joints[1].position_m = f.joints[0].position_m;
  CHECK_THROWS_AS(velocity_loss(f, sk), Error);
}

TEST_CASE("kine loss is the stated convex combination") {
  const Skeleton sk = default_skeleton();
  DiprFrame f = tpose_frame(sk, {3, 0, 0}, {0, 0, 0});
  f.joints[4].position_m += Vec3{0.06, 0.01, -0.03};
  f.joints[4].velocity_mps = {0.3, 0.0, 0.1};

  LossWeights w;
  w.lambda1 = 1.0;
  CHECK(kine_loss(f, sk, w) == Catch::Approx(bone_loss(f, sk)));
  w.lambda1 = 0.0;
  CHECK(kine_loss(f, sk, w) == Catch::Approx(velocity_loss(f, sk)));
  w.lambda1 = 0.5;
  CHECK(kine_loss(f, sk, w) ==
        Catch::Approx(0.5 * bone_loss(f, sk) + 0.5 * velocity_loss(f, sk)));
}

TEST_CASE("kine gradients match finite differences") {
  const Skeleton sk = default_skeleton();
  DiprFrame f = tpose_frame(sk, {3, 0.1, 0}, {0.2, 0, 0});
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.05);
  for (auto& j : f.joints) {
    j.position_m += Vec3{g(rng), g(rng), g(rng)};
    j.velocity_mps += Vec3{g(rng), g(rng), g(rng)};
  }
  LossWeights w;
  const auto grad = kine_gradients(f, sk, w);
  const ParamLayout layout = ParamLayout::of(f);
  const auto x0 = flatten_frame(f);
  const auto gflat = flatten_gradients(grad);
  auto fval = [&](std::span<const double> x) {
    return kine_loss(unflatten_frame(layout, x), sk, w);
  };
  int checked = 0;
  for (std::size_t idx = 0; idx < x0.size(); ++idx) {
    const auto c = layout.locate(idx);
    if (c.group != ParamGroup::Position && c.group != ParamGroup::Velocity) {
      CHECK(gflat[idx] == 0.0);  // kine touches p and v exclusively
      continue;
    }
    const double fd = finite_difference_oracle(fval, x0, idx, 1e-6);
    if (std::abs(gflat[idx]) < 1e-10 && std::abs(fd) < 1e-7) continue;
    CHECK(gflat[idx] == Catch::Approx(fd).epsilon(1e-5).margin(1e-9));
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("recon gradient matches finite differences with frozen threshold") {
  const auto g = test_grid();
  const Heatmap obs = random_heatmap(g, 41);
  Heatmap h = random_heatmap(g, 42);
  LossWeights w;
  const auto ev = recon_loss_eval(h, obs, w, true);
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<std::size_t> pick(0, h.values.size() - 1);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t idx = pick(rng);
    if (std::abs(ev.d_loss_d_dipr[idx]) < 1e-9) continue;
    const double step = 1e-6;
    Heatmap hp = h, hm = h;
    hp.values[idx] += step;
    hm.values[idx] -= step;
    const double fp = recon_loss_eval(hp, obs, w, false, ev.freeze_dipr).loss;
    const double fm = recon_loss_eval(hm, obs, w, false, ev.freeze_dipr).loss;
    const double fd = (fp - fm) / (2.0 * step);
    CHECK(ev.d_loss_d_dipr[idx] == Catch::Approx(fd).epsilon(1e-5).margin(1e-10));
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("total loss: lambda2 = 0 leaves only kinematic gradients") {
  const Skeleton sk = default_skeleton();
  const auto g = test_grid();
  DiprFrame f = tpose_frame(sk, {3, 0, 0}, {0.4, 0.1, 0});
  f.joints[2].position_m += Vec3{0.03, 0.02, -0.05};
  const Heatmap obs = random_heatmap(g, 51);
  LossWeights w;
  w.lambda2 = 0.0;
  const auto res = total_loss(f, obs, sk, RadarParams{}, g, RenderKernelParams{}, w);
  for (const auto& jg : res.gradients.joints) {
    CHECK(jg.scale.norm() == 0.0);
    CHECK(jg.opacity == 0.0);
    for (double d : jg.rotation) CHECK(d == 0.0);
    for (double d : jg.doppler_features) CHECK(d == 0.0);
  }
  CHECK(res.loss == Catch::Approx(kine_loss(f, sk, w)));
}

TEST_CASE("total loss vanishes at a self-consistent frame") {
  const Skeleton sk = default_skeleton();
  const auto g = test_grid();
  const DiprFrame f = tpose_frame(sk, {3, 0.05, 0}, {0.5, 0.02, 0});
  const Heatmap obs = render(f, RadarParams{}, g, RenderKernelParams{});
  LossWeights w;
  const auto res = total_loss(f, obs, sk, RadarParams{}, g, RenderKernelParams{}, w);
  CHECK(res.loss < 1e-9);
}
