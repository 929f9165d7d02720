#pragma once

#include <initializer_list>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "mgs/renderer.hpp"

namespace mgs {

enum class MotionKind { StaticTpose, ArmSwing, Walk };

inline MotionKind motion_kind_from_string(const std::string& s) {
  if (s == "static_tpose") return MotionKind::StaticTpose;
  if (s == "arm_swing") return MotionKind::ArmSwing;
  if (s == "walk") return MotionKind::Walk;
  throw Error(ErrorKind::Config, "unknown motion '" + s + "'");
}

inline const char* motion_kind_name(MotionKind k) {
  switch (k) {
    case MotionKind::StaticTpose: return "static_tpose";
    case MotionKind::ArmSwing: return "arm_swing";
    case MotionKind::Walk: return "walk";
  }
  return "static_tpose";
}

struct SceneSpec {
  MotionKind motion = MotionKind::StaticTpose;
  double amplitude_m = 0.3;       // arm_swing wrist path amplitude
  double period_s = 2.0;          // arm_swing period
  double speed_mps = 0.8;         // walk drift speed
  double stride_period_s = 1.2;   // walk leg swing period
  Vec3 anchor_m{3.0, 0.0, 0.0};
  int frames = 1;
  double dt_s = 0.1;
  int clutter_points = 0;
  double clutter_intensity_rel = 0.3;
  std::optional<double> noise_snr_db;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames < 1) throw Error(ErrorKind::Config, "scene needs at least one frame");
    if (!(dt_s > 0.0)) throw Error(ErrorKind::Config, "dt_s must be positive");
    if (clutter_points < 0) throw Error(ErrorKind::Config, "clutter_points must be non-negative");
    if (!(clutter_intensity_rel >= 0.0))
      throw Error(ErrorKind::Config, "clutter_intensity_rel must be non-negative");
    if (!(amplitude_m >= 0.0) || !(period_s > 0.0) || !(speed_mps >= 0.0) ||
        !(stride_period_s > 0.0))
      throw Error(ErrorKind::Config, "motion parameters out of range");
  }
};

struct GroundTruthSequence {
  std::vector<std::vector<Vec3>> poses;       // [frame][joint]
  std::vector<std::vector<Vec3>> velocities;  // finite differences of poses
  double dt_s = 0.0;
};

namespace detail {

inline Vec3 rotate_about(const Vec3& p, const Vec3& center, const Vec3& axis, double angle) {
  return center + Quat::from_axis_angle(axis, angle).to_rotation() * (p - center);
}

// Analytic joint positions for one frame of the motion program.
inline std::vector<Vec3> motion_pose(const SceneSpec& spec, const Skeleton& sk, double t) {
  const int root = sk.root_index();
  const Vec3 root_tpose = sk.tpose_positions_m[static_cast<std::size_t>(root)];
  std::vector<Vec3> pose(sk.tpose_positions_m.size());
  for (std::size_t i = 0; i < pose.size(); ++i)
    pose[i] = spec.anchor_m + (sk.tpose_positions_m[i] - root_tpose);

  // Arms sweep horizontally about the shoulder's vertical axis so the motion
  // stays visible to the range/azimuth/Doppler axes of the grid.
  auto swing_chain = [&](const char* shoulder, std::initializer_list<const char*> chain,
                         double angle) {
    const Vec3 center = pose[static_cast<std::size_t>(sk.index_of(shoulder))];
    for (const char* name : chain) {
      auto& p = pose[static_cast<std::size_t>(sk.index_of(name))];
      p = rotate_about(p, center, {0.0, 0.0, 1.0}, angle);
    }
  };

  switch (spec.motion) {
    case MotionKind::StaticTpose:
      break;
    case MotionKind::ArmSwing: {
      // Rigid rotation of each arm about its shoulder, opposite phases; the
      // swing angle is sized so the wrist path amplitude equals amplitude_m.
      const double wrist_reach =
          (sk.tpose_positions_m[static_cast<std::size_t>(sk.index_of("l_wrist"))] -
           sk.tpose_positions_m[static_cast<std::size_t>(sk.index_of("l_shoulder"))])
              .norm();
      const double theta = spec.amplitude_m / wrist_reach * std::sin(2.0 * kPi * t / spec.period_s);
      swing_chain("l_shoulder", {"l_elbow", "l_wrist"}, theta);
      swing_chain("r_shoulder", {"r_elbow", "r_wrist"}, -theta);
      break;
    }
    case MotionKind::Walk: {
      const Vec3 drift{0.0, spec.speed_mps * t, 0.0};
      for (auto& p : pose) p += drift;
      const double knee_reach =
          (sk.tpose_positions_m[static_cast<std::size_t>(sk.index_of("l_knee"))] -
           sk.tpose_positions_m[static_cast<std::size_t>(sk.index_of("l_hip"))])
              .norm();
      const double theta = 0.15 / knee_reach * std::sin(2.0 * kPi * t / spec.stride_period_s);
      // legs swing forward and back about the hip's lateral axis
      auto swing_leg = [&](const char* hip, const char* knee, const char* ankle, double a) {
        const Vec3 center = pose[static_cast<std::size_t>(sk.index_of(hip))];
        for (const char* name : {knee, ankle}) {
          auto& p = pose[static_cast<std::size_t>(sk.index_of(name))];
          p = rotate_about(p, center, {0.0, 1.0, 0.0}, a);
        }
      };
      swing_leg("l_hip", "l_knee", "l_ankle", theta);
      swing_leg("r_hip", "r_knee", "r_ankle", -theta);
      break;
    }
  }
  return pose;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step over seed + stream
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

inline double snr_of(const Heatmap& clean, const Heatmap& noisy) {
  if (!(clean.grid == noisy.grid)) throw Error(ErrorKind::Shape, "snr_of requires matching grids");
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < clean.values.size(); ++i) {
    signal += clean.values[i] * clean.values[i];
    const double d = noisy.values[i] - clean.values[i];
    noise += d * d;
  }
  if (!(signal > 0.0)) throw Error(ErrorKind::Domain, "snr_of undefined for zero clean energy");
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

// Paired heatmaps and ground truth for desk-scale verification. Clutter is
// static off-body scatterers plus one single-bounce multipath ghost each at
// 1.4x range; complex Gaussian noise is injected before the magnitude and
// rescaled to hit the requested SNR.
inline std::pair<std::vector<Heatmap>, GroundTruthSequence> generate_scene(
    const SceneSpec& spec, const Skeleton& sk, const RadarParams& rp, const HeatmapGrid& grid,
    const RenderKernelParams& kp) {
  spec.validate();
  rp.validate();
  grid.validate();

  GroundTruthSequence gt;
  gt.dt_s = spec.dt_s;
  gt.poses.reserve(static_cast<std::size_t>(spec.frames));
  for (int t = 0; t < spec.frames; ++t)
    gt.poses.push_back(detail::motion_pose(spec, sk, t * spec.dt_s));

  // Finite-difference velocities: central at interior frames, one-sided at
  // the ends.
  gt.velocities.assign(gt.poses.size(), std::vector<Vec3>(gt.poses.front().size()));
  const int nf = spec.frames;
  for (int t = 0; t < nf; ++t) {
    for (std::size_t ji = 0; ji < gt.poses.front().size(); ++ji) {
      if (nf == 1)
        gt.velocities[static_cast<std::size_t>(t)][ji] = {};
      else if (t == 0)
        gt.velocities[0][ji] = (gt.poses[1][ji] - gt.poses[0][ji]) / spec.dt_s;
      else if (t == nf - 1)
        gt.velocities[static_cast<std::size_t>(t)][ji] =
            (gt.poses[static_cast<std::size_t>(t)][ji] - gt.poses[static_cast<std::size_t>(t - 1)][ji]) /
            spec.dt_s;
      else
        gt.velocities[static_cast<std::size_t>(t)][ji] =
            (gt.poses[static_cast<std::size_t>(t + 1)][ji] -
             gt.poses[static_cast<std::size_t>(t - 1)][ji]) /
            (2.0 * spec.dt_s);
    }
  }

  // Static clutter, excluded from a 0.5 m body shell, sampled so that the
  // 1.4x multipath ghost also stays inside range coverage.
  std::vector<GaussianJoint> clutter;
  {
    std::mt19937_64 rng(detail::derive_seed(spec.seed, 0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double r_lo = std::max(grid.range_min_m + 0.05 * grid.range_res_m, kp.min_range_m);
    const double r_hi = grid.range_max() / 1.4 - 0.05 * grid.range_res_m;
    const double az_lo = grid.angle_min_rad + 0.05 * grid.angle_res_rad;
    const double az_hi = grid.angle_max() - 0.05 * grid.angle_res_rad;
    const auto envelope = default_doppler_envelope(16, 2.0);
    int placed = 0, attempts = 0;
    while (placed < spec.clutter_points && attempts < 10000) {
      ++attempts;
      const double r = r_lo + unit(rng) * (r_hi - r_lo);
      const double az = az_lo + unit(rng) * (az_hi - az_lo);
      const Vec3 p = spherical_to_cartesian(r, az, 0.0);
      bool near_body = false;
      for (const auto& pose : gt.poses)
        for (const auto& jp : pose)
          if ((jp - p).norm() < 0.5) near_body = true;
      if (near_body) continue;

      GaussianJoint c;
      c.position_m = p;
      c.scale_m = {0.05, 0.05, 0.05};
      c.opacity = spec.clutter_intensity_rel;
      c.doppler_features = envelope;
      clutter.push_back(c);

      GaussianJoint ghost = c;  // mirrored single-bounce return
      ghost.position_m = p * 1.4;
      clutter.push_back(ghost);
      ++placed;
    }
    if (placed < spec.clutter_points)
      throw Error(ErrorKind::Scene, "could not place requested clutter outside the body shell");
  }

  const auto envelope = default_doppler_envelope(16, 2.0);
  std::vector<Heatmap> heatmaps;
  heatmaps.reserve(static_cast<std::size_t>(spec.frames));
  for (int t = 0; t < nf; ++t) {
    DiprFrame frame;
    frame.timestamp_s = t * spec.dt_s;
    frame.joints.resize(gt.poses.front().size());
    for (std::size_t ji = 0; ji < frame.joints.size(); ++ji) {
      auto& j = frame.joints[ji];
      j.position_m = gt.poses[static_cast<std::size_t>(t)][ji];
      j.velocity_mps = gt.velocities[static_cast<std::size_t>(t)][ji];
      const double s = is_torso_joint(sk.joint_names[ji]) ? 0.12 : 0.08;
      j.scale_m = {s, s, s};
      j.opacity = 1.0;
      j.doppler_features = envelope;
      const double r = j.position_m.norm();
      if (!(j.position_m.x > 0.0) || r < grid.range_min_m || r > grid.range_max())
        throw Error(ErrorKind::Scene, "anchor leaves coverage at frame " + std::to_string(t));
    }
    for (const auto& c : clutter) frame.joints.push_back(c);

    auto field = render_complex(frame, rp, grid, kp);
    Heatmap clean(grid);
    for (std::size_t i = 0; i < field.size(); ++i) clean.values[i] = std::abs(field[i]);

    if (spec.noise_snr_db) {
      std::mt19937_64 rng(detail::derive_seed(spec.seed, 1 + static_cast<std::uint64_t>(t)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<std::complex<double>> eta(field.size());
      for (auto& e : eta) e = {gauss(rng), gauss(rng)};

      const auto measure = [&](double a) {
        double signal = 0.0, noise = 0.0;
        for (std::size_t i = 0; i < field.size(); ++i) {
          const double mag = std::abs(field[i] + a * eta[i]);
          const double d = mag - clean.values[i];
          signal += clean.values[i] * clean.values[i];
          noise += d * d;
        }
        return 10.0 * std::log10(signal / std::max(noise, 1e-300));
      };
      // Bisection on the noise amplitude; measured SNR is monotone in it.
      double lo = 0.0, hi = 1.0;
      while (measure(hi) > *spec.noise_snr_db && hi < 1e12) hi *= 2.0;
      for (int iter = 0; iter < 80; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (measure(mid) > *spec.noise_snr_db)
          lo = mid;
        else
          hi = mid;
      }
      const double a = 0.5 * (lo + hi);
      Heatmap noisy(grid);
      for (std::size_t i = 0; i < field.size(); ++i) noisy.values[i] = std::abs(field[i] + a * eta[i]);
      heatmaps.push_back(std::move(noisy));
    } else {
      heatmaps.push_back(std::move(clean));
    }
  }
  return {std::move(heatmaps), std::move(gt)};
}

}  // namespace mgs
