#pragma once

#include <functional>
#include <limits>
#include <random>
#include <span>

#include "mgs/losses.hpp"

namespace mgs {

enum class ParamGroup { Position, Scale, Rotation, Velocity, Opacity, Doppler };

// Flattened coordinates of a DiprFrame, per joint:
// p[3], s[3], q[4], v[3], beta[1], phi[N_d].
struct ParamLayout {
  int joints = 0;
  int doppler_bins = 0;

  std::size_t per_joint() const { return 14 + static_cast<std::size_t>(doppler_bins); }
  std::size_t size() const { return static_cast<std::size_t>(joints) * per_joint(); }

  struct Coord {
    int joint = 0;
    ParamGroup group = ParamGroup::Position;
    int component = 0;
  };

  Coord locate(std::size_t idx) const {
    if (idx >= size()) throw Error(ErrorKind::Domain, "parameter index out of range");
    Coord c;
    c.joint = static_cast<int>(idx / per_joint());
    std::size_t o = idx % per_joint();
    if (o < 3) {
      c.group = ParamGroup::Position;
      c.component = static_cast<int>(o);
    } else if (o < 6) {
      c.group = ParamGroup::Scale;
      c.component = static_cast<int>(o - 3);
    } else if (o < 10) {
      c.group = ParamGroup::Rotation;
      c.component = static_cast<int>(o - 6);
    } else if (o < 13) {
      c.group = ParamGroup::Velocity;
      c.component = static_cast<int>(o - 10);
    } else if (o < 14) {
      c.group = ParamGroup::Opacity;
      c.component = 0;
    } else {
      c.group = ParamGroup::Doppler;
      c.component = static_cast<int>(o - 14);
    }
    return c;
  }

  static double typical_scale(ParamGroup g) {
    switch (g) {
      case ParamGroup::Position: return 1.0;    // m
      case ParamGroup::Scale: return 0.1;       // m
      case ParamGroup::Rotation: return 1.0;
      case ParamGroup::Velocity: return 1.0;    // m/s
      case ParamGroup::Opacity: return 1.0;
      case ParamGroup::Doppler: return 0.1;
    }
    return 1.0;
  }

  static ParamLayout of(const DiprFrame& frame) {
    ParamLayout l;
    l.joints = static_cast<int>(frame.joints.size());
    l.doppler_bins =
        frame.joints.empty() ? 0 : static_cast<int>(frame.joints.front().doppler_features.size());
    return l;
  }
};

inline std::vector<double> flatten_frame(const DiprFrame& frame) {
  const ParamLayout l = ParamLayout::of(frame);
  std::vector<double> x;
  x.reserve(l.size());
  for (const auto& j : frame.joints) {
    if (j.doppler_features.size() != static_cast<std::size_t>(l.doppler_bins))
      throw Error(ErrorKind::Shape, "ragged Doppler feature vectors");
    x.insert(x.end(), {j.position_m.x, j.position_m.y, j.position_m.z});
    x.insert(x.end(), {j.scale_m.x, j.scale_m.y, j.scale_m.z});
    x.insert(x.end(), {j.rotation.w, j.rotation.x, j.rotation.y, j.rotation.z});
    x.insert(x.end(), {j.velocity_mps.x, j.velocity_mps.y, j.velocity_mps.z});
    x.push_back(j.opacity);
    x.insert(x.end(), j.doppler_features.begin(), j.doppler_features.end());
  }
  return x;
}

// Inverse of flatten_frame. No invariant projection happens here; consumers
// of ambient coordinates (renderer, losses) normalize internally.
inline DiprFrame unflatten_frame(const ParamLayout& l, std::span<const double> x,
                                 double timestamp_s = 0.0) {
  if (x.size() != l.size()) throw Error(ErrorKind::Shape, "parameter vector length mismatch");
  DiprFrame frame;
  frame.timestamp_s = timestamp_s;
  frame.joints.resize(static_cast<std::size_t>(l.joints));
  std::size_t i = 0;
  for (auto& j : frame.joints) {
    j.position_m = {x[i], x[i + 1], x[i + 2]};
    j.scale_m = {x[i + 3], x[i + 4], x[i + 5]};
    j.rotation = {x[i + 6], x[i + 7], x[i + 8], x[i + 9]};
    j.velocity_mps = {x[i + 10], x[i + 11], x[i + 12]};
    j.opacity = x[i + 13];
    j.doppler_features.assign(x.begin() + static_cast<std::ptrdiff_t>(i + 14),
                              x.begin() + static_cast<std::ptrdiff_t>(i + l.per_joint()));
    i += l.per_joint();
  }
  return frame;
}

inline std::vector<double> flatten_gradients(const FrameGradients& g) {
  std::vector<double> x;
  for (const auto& j : g.joints) {
    x.insert(x.end(), {j.position.x, j.position.y, j.position.z});
    x.insert(x.end(), {j.scale.x, j.scale.y, j.scale.z});
    x.insert(x.end(), j.rotation.begin(), j.rotation.end());
    x.insert(x.end(), {j.velocity.x, j.velocity.y, j.velocity.z});
    x.push_back(j.opacity);
    x.insert(x.end(), j.doppler_features.begin(), j.doppler_features.end());
  }
  return x;
}

// Central finite difference (f(x + h e) - f(x - h e)) / (2h).
inline double finite_difference_oracle(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> x, std::size_t idx, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::Domain, "finite difference step must be positive");
  if (idx >= x.size()) throw Error(ErrorKind::Domain, "coordinate index out of range");
  const double x0 = x[idx];
  x[idx] = x0 + h;
  const double fp = f(x);
  x[idx] = x0 - h;
  const double fm = f(x);
  x[idx] = x0;
  if (!std::isfinite(fp) || !std::isfinite(fm))
    throw Error(ErrorKind::Oracle, "non-finite evaluation in finite difference oracle");
  return (fp - fm) / (2.0 * h);
}

struct GradCheckConfig {
  Skeleton skeleton = default_skeleton();
  RadarParams radar;
  HeatmapGrid grid{32, 16, 16, 0.1875, 0.25, 2.0 * kPi / 3.0 / 16.0, 0.5, -2.0, -kPi / 3.0};
  RenderKernelParams kernel;
  LossWeights weights;
  int doppler_bins = 16;
  int scenes = 20;
  double tolerance = 1e-4;
  double gradient_floor = 1e-8;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_coordinate = 0;
  int worst_scene = -1;
  bool pass = true;
  int checked = 0;
  int excluded_kinks = 0;  // truncation-window / floor crossings, unstable FD
  int below_floor = 0;     // |gradient| under the comparison floor
};

// Round-off noise of a central difference: the evaluations carry ulp-scale
// error, divided by the 2h baseline. The two evaluations share almost all of
// their arithmetic, so their rounding errors are strongly correlated and the
// effective noise is a fraction of an ulp. A coordinate whose required
// resolution sits under this floor cannot be adjudicated by the oracle and
// is excluded as unresolvable.
inline double fd_noise_floor(double f_scale, double h) {
  return 4.0 * std::numeric_limits<double>::epsilon() * std::abs(f_scale) / (2.0 * h);
}

namespace detail {

inline DiprFrame random_gradcheck_frame(const Skeleton& sk, const HeatmapGrid& grid,
                                        int doppler_bins, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r_lo = grid.range_min_m + 0.25 * (grid.range_max() - grid.range_min_m);
  const double r_hi = grid.range_min_m + 0.75 * (grid.range_max() - grid.range_min_m);
  const double az_span = grid.angle_max() - grid.angle_min_rad;
  const double az_lo = grid.angle_min_rad + 0.3 * az_span;
  const double az_hi = grid.angle_min_rad + 0.7 * az_span;
  const double anchor_r = r_lo + unit(rng) * (r_hi - r_lo);
  const double anchor_az = az_lo + unit(rng) * (az_hi - az_lo);
  const Vec3 anchor = spherical_to_cartesian(anchor_r, anchor_az, 0.0);

  const double v_cov = std::min(std::abs(grid.doppler_min_mps), std::abs(grid.doppler_max()));
  const int root = sk.root_index();
  DiprFrame frame;
  frame.joints.resize(static_cast<std::size_t>(sk.joint_count()));
  for (int i = 0; i < sk.joint_count(); ++i) {
    auto& j = frame.joints[static_cast<std::size_t>(i)];
    const Vec3 offset = sk.tpose_positions_m[static_cast<std::size_t>(i)] -
                        sk.tpose_positions_m[static_cast<std::size_t>(root)];
    j.position_m = anchor + offset +
                   Vec3{0.16 * (unit(rng) - 0.5), 0.16 * (unit(rng) - 0.5),
                        0.16 * (unit(rng) - 0.5)};
    j.scale_m = {0.05 + 0.3 * unit(rng), 0.05 + 0.3 * unit(rng), 0.05 + 0.3 * unit(rng)};
    std::normal_distribution<double> gauss(0.0, 1.0);
    Quat q{gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
    j.rotation = q.normalized();
    j.velocity_mps = {0.8 * v_cov * (unit(rng) - 0.5), 0.8 * v_cov * (unit(rng) - 0.5),
                      0.8 * v_cov * (unit(rng) - 0.5)};
    j.opacity = 0.4 + 1.2 * unit(rng);
    j.doppler_features.resize(static_cast<std::size_t>(doppler_bins));
    double sum = 0.0;
    for (auto& f : j.doppler_features) {
      f = 0.05 + unit(rng);
      sum += f;
    }
    for (auto& f : j.doppler_features) f /= sum;
  }
  return frame;
}

}  // namespace detail

// Samples random parameter coordinates across random scenes and compares the
// analytic total-loss gradient against the central finite-difference oracle.
// Coordinates at non-smooth configurations (truncation-window shifts, sigma
// floor crossings, an oracle that has not converged) are excluded and
// counted.
inline GradCheckReport gradcheck(const GradCheckConfig& cfg, int count, std::uint64_t seed) {
  if (count < 0) throw Error(ErrorKind::Config, "gradcheck count must be non-negative");
  GradCheckReport report;
  if (count == 0) return report;

  std::mt19937_64 rng(seed);
  struct Scene {
    DiprFrame frame;
    Heatmap observed;
    std::vector<double> x;
    std::vector<double> analytic;
    MaskFreeze frozen;
    double base_value = 0.0;
    ParamLayout layout;
  };
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(cfg.scenes));
  for (int s = 0; s < cfg.scenes; ++s) {
    Scene sc;
    sc.frame = detail::random_gradcheck_frame(cfg.skeleton, cfg.grid, cfg.doppler_bins, rng);
    // The observation is a nearby state, the regime fitting actually visits;
    // this keeps the reconstruction masks overlapping and the gradients live.
    DiprFrame target = sc.frame;
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (auto& j : target.joints) {
      j.position_m += Vec3{0.08 * jitter(rng), 0.08 * jitter(rng), 0.08 * jitter(rng)};
      j.velocity_mps += Vec3{0.1 * jitter(rng), 0.1 * jitter(rng), 0.1 * jitter(rng)};
    }
    sc.observed = render(target, cfg.radar, cfg.grid, cfg.kernel);
    sc.x = flatten_frame(sc.frame);
    sc.layout = ParamLayout::of(sc.frame);
    const auto total =
        total_loss(sc.frame, sc.observed, cfg.skeleton, cfg.radar, cfg.grid, cfg.kernel, cfg.weights);
    sc.analytic = flatten_gradients(total.gradients);
    sc.frozen = total.freeze_dipr;
    sc.base_value = total.loss;
    scenes.push_back(std::move(sc));
  }

  std::uniform_int_distribution<int> scene_pick(0, cfg.scenes - 1);
  for (int c = 0; c < count; ++c) {
    const int si = scene_pick(rng);
    auto& sc = scenes[static_cast<std::size_t>(si)];
    std::uniform_int_distribution<std::size_t> coord_pick(0, sc.x.size() - 1);
    const std::size_t idx = coord_pick(rng);
    const double analytic = sc.analytic[idx];
    if (std::abs(analytic) <= cfg.gradient_floor) {
      ++report.below_floor;
      continue;
    }

    const auto coord = sc.layout.locate(idx);
    const double h =
        1e-6 * std::max(std::abs(sc.x[idx]), ParamLayout::typical_scale(coord.group));
    auto f = [&](std::span<const double> x) {
      const DiprFrame frame = unflatten_frame(sc.layout, x, sc.frame.timestamp_s);
      return total_loss_value(frame, sc.observed, cfg.skeleton, cfg.radar, cfg.grid, cfg.kernel,
                              cfg.weights, sc.frozen);
    };

    // Non-smooth configuration detection: the truncation windows and floor
    // activations must agree on both sides of the stencil, the oracle must
    // have converged between two step sizes, and the difference quotient
    // must rise above the f64 round-off floor of the evaluations.
    bool kink = false;
    double fd = 0.0, fd_half = 0.0;
    try {
      std::vector<double> xp = sc.x;
      xp[idx] += h;
      const auto side_p = render_side_info(unflatten_frame(sc.layout, xp), cfg.radar, cfg.grid,
                                           cfg.kernel);
      xp[idx] = sc.x[idx] - h;
      const auto side_m = render_side_info(unflatten_frame(sc.layout, xp), cfg.radar, cfg.grid,
                                           cfg.kernel);
      kink = !(side_p == side_m);
      if (!kink) {
        fd = finite_difference_oracle(f, sc.x, idx, h);
        fd_half = finite_difference_oracle(f, sc.x, idx, 0.5 * h);
        const double ref = std::max({std::abs(analytic), std::abs(fd), std::abs(fd_half)});
        if (std::abs(fd - fd_half) > 0.2 * cfg.tolerance * ref) kink = true;
        if (fd_noise_floor(sc.base_value, h) > 0.25 * cfg.tolerance * ref) kink = true;
      }
    } catch (const Error&) {
      kink = true;  // stencil crossed a domain boundary
    }
    if (kink) {
      ++report.excluded_kinks;
      continue;
    }

    const double rel = std::abs(analytic - fd) / std::max(std::abs(analytic), std::abs(fd));
    ++report.checked;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_coordinate = idx;
      report.worst_scene = si;
    }
  }
  report.pass = report.max_rel_err <= cfg.tolerance;
  return report;
}

}  // namespace mgs
