#pragma once

#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include "mgs/core.hpp"
#include "mgs/geometry.hpp"

namespace mgs {

// Gaussian joint primitive: position, scale, rotation, velocity, opacity and
// Doppler features.
struct GaussianJoint {
  Vec3 position_m;
  Vec3 scale_m{0.1, 0.1, 0.1};
  Quat rotation;
  Vec3 velocity_mps;
  double opacity = 1.0;
  std::vector<double> doppler_features;

  void validate() const {
    if (std::abs(rotation.norm() - 1.0) > 1e-9)
      throw Error(ErrorKind::Domain, "joint rotation must be a unit quaternion");
    if (!(scale_m.x > 0.0) || !(scale_m.y > 0.0) || !(scale_m.z > 0.0))
      throw Error(ErrorKind::Domain, "joint scale components must be strictly positive");
    if (!(opacity >= 0.0)) throw Error(ErrorKind::Domain, "joint opacity must be non-negative");
    if (doppler_features.empty())
      throw Error(ErrorKind::Domain, "joint needs at least one Doppler feature bin");
    double sum = 0.0;
    for (double f : doppler_features) {
      if (!(f >= 0.0)) throw Error(ErrorKind::Domain, "Doppler features must be non-negative");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(ErrorKind::Domain, "Doppler features must sum to one");
  }
};

struct DiprFrame {
  std::vector<GaussianJoint> joints;
  double timestamp_s = 0.0;

  void validate(const Skeleton& sk) const {
    if (joints.size() != static_cast<std::size_t>(sk.joint_count()))
      throw Error(ErrorKind::Shape, "frame joint count does not match skeleton");
    for (const auto& j : joints) j.validate();
  }
};

// Sigma = R S S^T R^T with S = diag(scale).
inline Mat3 covariance(const GaussianJoint& j) {
  if (std::abs(j.rotation.norm() - 1.0) > 1e-9)
    throw Error(ErrorKind::Domain, "covariance requires a unit quaternion");
  const Mat3 r = j.rotation.to_rotation();
  Mat3 ss;
  ss(0, 0) = j.scale_m.x * j.scale_m.x;
  ss(1, 1) = j.scale_m.y * j.scale_m.y;
  ss(2, 2) = j.scale_m.z * j.scale_m.z;
  return r * ss * r.transposed();
}

// exp(-1/2 (x-p)^T Sigma^-1 (x-p)), evaluated in the joint's principal frame.
inline double gaussian_density(const GaussianJoint& j, const Vec3& x) {
  const Mat3 r = j.rotation.to_rotation();
  const Vec3 d = r.transpose_mul(x - j.position_m);
  const double q = (d.x / j.scale_m.x) * (d.x / j.scale_m.x) +
                   (d.y / j.scale_m.y) * (d.y / j.scale_m.y) +
                   (d.z / j.scale_m.z) * (d.z / j.scale_m.z);
  return std::exp(-0.5 * q);
}

// Signal disturbance of a joint at x. The Doppler feature vector enters
// through its scalar mean; the phase factor has unit modulus so
// |D(x)| = opacity * G(x).
inline std::complex<double> disturbance(const GaussianJoint& j, const Vec3& x) {
  const double g = gaussian_density(j, x);
  const double phi_mean =
      std::accumulate(j.doppler_features.begin(), j.doppler_features.end(), 0.0) /
      static_cast<double>(j.doppler_features.size());
  const double phase = phi_mean * j.velocity_mps.dot(x - j.position_m);
  return j.opacity * g * std::complex<double>(std::cos(phase), std::sin(phase));
}

// Defaults for T-pose initialization; the paper fixes none of these.
struct InitConfig {
  int doppler_feature_bins = 16;
  double envelope_sigma_bins = 2.0;
  double association_radius_m = 0.3;
  double limb_scale_m = 0.08;
  double torso_scale_m = 0.12;
  double default_anchor_range_m = 3.0;
};

inline std::vector<double> default_doppler_envelope(int bins, double sigma_bins) {
  if (bins < 1) throw Error(ErrorKind::Config, "doppler feature bins must be >= 1");
  std::vector<double> env(static_cast<std::size_t>(bins));
  const double center = static_cast<double>(bins) / 2.0;
  double sum = 0.0;
  for (int k = 0; k < bins; ++k) {
    const double d = (static_cast<double>(k) - center) / sigma_bins;
    env[static_cast<std::size_t>(k)] = std::exp(-0.5 * d * d);
    sum += env[static_cast<std::size_t>(k)];
  }
  for (double& e : env) e /= sum;
  return env;
}

inline bool is_torso_joint(const std::string& name) {
  return name == "pelvis" || name == "neck" || name.find("hip") != std::string::npos ||
         name.find("shoulder") != std::string::npos || name.find("head") != std::string::npos;
}

// Rigid T-pose placement anchored at the intensity-weighted centroid of the
// coarse state. Joint velocities come from coarse entries within the
// association radius, falling back to the global weighted mean.
inline DiprFrame init_from_coarse(const Skeleton& sk, const CoarseState& cs,
                                  const InitConfig& cfg = {}) {
  const int n = sk.joint_count();
  const int root = sk.root_index();
  const auto envelope = default_doppler_envelope(cfg.doppler_feature_bins, cfg.envelope_sigma_bins);

  Vec3 anchor{cfg.default_anchor_range_m, 0.0, 0.0};
  Vec3 mean_velocity{};
  double wsum = 0.0;
  if (!cs.empty()) {
    Vec3 centroid{};
    Vec3 vsum{};
    for (std::size_t i = 0; i < cs.size(); ++i) {
      centroid += cs.positions_m[i] * cs.weights[i];
      vsum += cs.velocities_mps[i] * cs.weights[i];
      wsum += cs.weights[i];
    }
    if (wsum > 0.0) {
      anchor = centroid / wsum;
      mean_velocity = vsum / wsum;
    }
  }

  DiprFrame frame;
  frame.joints.resize(static_cast<std::size_t>(n));
  const Vec3 root_tpose = sk.tpose_positions_m[static_cast<std::size_t>(root)];
  for (int i = 0; i < n; ++i) {
    auto& j = frame.joints[static_cast<std::size_t>(i)];
    j.position_m = anchor + (sk.tpose_positions_m[static_cast<std::size_t>(i)] - root_tpose);
    const double s = is_torso_joint(sk.joint_names[static_cast<std::size_t>(i)])
                         ? cfg.torso_scale_m
                         : cfg.limb_scale_m;
    j.scale_m = {s, s, s};
    j.rotation = Quat{};
    j.opacity = 1.0;
    j.doppler_features = envelope;

    Vec3 local_v{};
    double local_w = 0.0;
    for (std::size_t e = 0; e < cs.size(); ++e) {
      if ((cs.positions_m[e] - j.position_m).norm() <= cfg.association_radius_m) {
        local_v += cs.velocities_mps[e] * cs.weights[e];
        local_w += cs.weights[e];
      }
    }
    if (local_w > 0.0)
      j.velocity_mps = local_v / local_w;
    else if (wsum > 0.0)
      j.velocity_mps = mean_velocity;
    else
      j.velocity_mps = {};
  }
  return frame;
}

// ---------------------------------------------------------------------------
// DiprFrame document (JSON): per-joint fields by name.
// ---------------------------------------------------------------------------

inline nlohmann::json dipr_frame_to_json(const DiprFrame& frame) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : frame.joints) {
    joints.push_back({
        {"position_m", {j.position_m.x, j.position_m.y, j.position_m.z}},
        {"scale_m", {j.scale_m.x, j.scale_m.y, j.scale_m.z}},
        {"rotation", {j.rotation.w, j.rotation.x, j.rotation.y, j.rotation.z}},
        {"velocity_mps", {j.velocity_mps.x, j.velocity_mps.y, j.velocity_mps.z}},
        {"opacity", j.opacity},
        {"doppler_features", j.doppler_features},
    });
  }
  return {{"timestamp_s", frame.timestamp_s}, {"joints", joints}};
}

inline DiprFrame dipr_frame_from_json(const nlohmann::json& doc) {
  DiprFrame frame;
  try {
    frame.timestamp_s = doc.at("timestamp_s").get<double>();
    for (const auto& jj : doc.at("joints")) {
      GaussianJoint j;
      auto vec3 = [](const nlohmann::json& v) -> Vec3 {
        return {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
      };
      j.position_m = vec3(jj.at("position_m"));
      j.scale_m = vec3(jj.at("scale_m"));
      const auto& q = jj.at("rotation");
      j.rotation = {q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                    q.at(3).get<double>()};
      j.velocity_mps = vec3(jj.at("velocity_mps"));
      j.opacity = jj.at("opacity").get<double>();
      j.doppler_features = jj.at("doppler_features").get<std::vector<double>>();
      frame.joints.push_back(std::move(j));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, "bad DIPR frame document: " + std::string(e.what()));
  }
  return frame;
}

}  // namespace mgs
