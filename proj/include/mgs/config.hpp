#pragma once

#include <set>
#include <string>

#include "mgs/cfar.hpp"
#include "mgs/fitter.hpp"
#include "mgs/synth.hpp"

namespace mgs {

// JSON-backed configuration documents. Parsing starts from the library
// defaults and applies the keys present; unknown keys are rejected so typos
// surface as config errors.

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& section) {
  if (!obj.is_object())
    throw Error(ErrorKind::Config, "config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items())
    if (!known.count(key))
      throw Error(ErrorKind::Config, "unknown key '" + key + "' in section '" + section + "'");
}

template <typename T>
void maybe(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::Config, std::string("bad value for key '") + key + "'");
    }
  }
}

inline void maybe_vec3(const nlohmann::json& obj, const char* key, Vec3& out) {
  if (obj.contains(key)) {
    const auto& v = obj.at(key);
    if (!v.is_array() || v.size() != 3)
      throw Error(ErrorKind::Config, std::string("key '") + key + "' must be a 3-array");
    out = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
  }
}

}  // namespace detail

inline RadarParams radar_from_json(const nlohmann::json& obj) {
  RadarParams rp;
  detail::reject_unknown_keys(obj,
                              {"wavelength_m", "bandwidth_hz", "chirp_duration_s",
                               "antenna_spacing_az_m", "antenna_spacing_el_m", "carrier_freq_hz"},
                              "radar");
  detail::maybe(obj, "wavelength_m", rp.wavelength_m);
  detail::maybe(obj, "bandwidth_hz", rp.bandwidth_hz);
  detail::maybe(obj, "chirp_duration_s", rp.chirp_duration_s);
  detail::maybe(obj, "antenna_spacing_az_m", rp.antenna_spacing_az_m);
  detail::maybe(obj, "antenna_spacing_el_m", rp.antenna_spacing_el_m);
  if (obj.contains("carrier_freq_hz")) {
    detail::maybe(obj, "carrier_freq_hz", rp.carrier_freq_hz);
    if (!obj.contains("wavelength_m")) rp.wavelength_m = kSpeedOfLight / rp.carrier_freq_hz;
  }
  rp.validate();
  return rp;
}

inline nlohmann::json radar_to_json(const RadarParams& rp) {
  return {{"wavelength_m", rp.wavelength_m},
          {"bandwidth_hz", rp.bandwidth_hz},
          {"chirp_duration_s", rp.chirp_duration_s},
          {"antenna_spacing_az_m", rp.antenna_spacing_az_m},
          {"antenna_spacing_el_m", rp.antenna_spacing_el_m},
          {"carrier_freq_hz", rp.carrier_freq_hz}};
}

inline HeatmapGrid grid_from_json(const nlohmann::json& obj) {
  HeatmapGrid g = HeatmapGrid{32, 16, 16, 0.1875, 0.25, 2.0 * kPi / 3.0 / 16.0,
                              0.5,  -2.0, -kPi / 3.0};
  detail::reject_unknown_keys(obj,
                              {"range_bins", "doppler_bins", "angle_bins", "range_res_m",
                               "doppler_res_mps", "angle_res_rad", "range_min_m",
                               "doppler_min_mps", "angle_min_rad"},
                              "grid");
  detail::maybe(obj, "range_bins", g.range_bins);
  detail::maybe(obj, "doppler_bins", g.doppler_bins);
  detail::maybe(obj, "angle_bins", g.angle_bins);
  detail::maybe(obj, "range_res_m", g.range_res_m);
  detail::maybe(obj, "doppler_res_mps", g.doppler_res_mps);
  detail::maybe(obj, "angle_res_rad", g.angle_res_rad);
  detail::maybe(obj, "range_min_m", g.range_min_m);
  detail::maybe(obj, "doppler_min_mps", g.doppler_min_mps);
  detail::maybe(obj, "angle_min_rad", g.angle_min_rad);
  g.validate();
  return g;
}

inline nlohmann::json grid_to_json(const HeatmapGrid& g) {
  return {{"range_bins", g.range_bins},       {"doppler_bins", g.doppler_bins},
          {"angle_bins", g.angle_bins},       {"range_res_m", g.range_res_m},
          {"doppler_res_mps", g.doppler_res_mps}, {"angle_res_rad", g.angle_res_rad},
          {"range_min_m", g.range_min_m},     {"doppler_min_mps", g.doppler_min_mps},
          {"angle_min_rad", g.angle_min_rad}};
}

inline RenderKernelParams kernel_from_json(const nlohmann::json& obj) {
  RenderKernelParams kp;
  detail::reject_unknown_keys(obj,
                              {"range_sigma_floor_bins", "doppler_sigma_floor_bins",
                               "angle_sigma_floor_bins", "truncation_sigmas", "coherent",
                               "min_range_m"},
                              "kernel");
  detail::maybe(obj, "range_sigma_floor_bins", kp.range_sigma_floor_bins);
  detail::maybe(obj, "doppler_sigma_floor_bins", kp.doppler_sigma_floor_bins);
  detail::maybe(obj, "angle_sigma_floor_bins", kp.angle_sigma_floor_bins);
  detail::maybe(obj, "truncation_sigmas", kp.truncation_sigmas);
  detail::maybe(obj, "coherent", kp.coherent);
  detail::maybe(obj, "min_range_m", kp.min_range_m);
  kp.validate();
  return kp;
}

inline nlohmann::json kernel_to_json(const RenderKernelParams& kp) {
  return {{"range_sigma_floor_bins", kp.range_sigma_floor_bins},
          {"doppler_sigma_floor_bins", kp.doppler_sigma_floor_bins},
          {"angle_sigma_floor_bins", kp.angle_sigma_floor_bins},
          {"truncation_sigmas", kp.truncation_sigmas},
          {"coherent", kp.coherent},
          {"min_range_m", kp.min_range_m}};
}

inline LossWeights loss_weights_from_json(const nlohmann::json& obj) {
  LossWeights w;
  detail::reject_unknown_keys(obj, {"lambda1", "lambda2", "top_fraction_T", "softness_tau"},
                              "loss_weights");
  detail::maybe(obj, "lambda1", w.lambda1);
  detail::maybe(obj, "lambda2", w.lambda2);
  detail::maybe(obj, "top_fraction_T", w.top_fraction_T);
  detail::maybe(obj, "softness_tau", w.softness_tau);
  w.validate();
  return w;
}

inline FitConfig fit_from_json(const nlohmann::json& obj) {
  FitConfig fc;
  detail::reject_unknown_keys(
      obj, {"max_iters", "lr_position", "lr_scale", "lr_rotation", "lr_velocity", "lr_opacity",
            "lr_doppler", "adaptive_beta1", "adaptive_beta2", "adaptive_eps", "convergence_tol",
            "loss_weights", "seed", "scale_min_m", "scale_max_m", "extract_top_fraction"},
      "fit");
  detail::maybe(obj, "max_iters", fc.max_iters);
  detail::maybe(obj, "lr_position", fc.lr_position);
  detail::maybe(obj, "lr_scale", fc.lr_scale);
  detail::maybe(obj, "lr_rotation", fc.lr_rotation);
  detail::maybe(obj, "lr_velocity", fc.lr_velocity);
  detail::maybe(obj, "lr_opacity", fc.lr_opacity);
  detail::maybe(obj, "lr_doppler", fc.lr_doppler);
  detail::maybe(obj, "adaptive_beta1", fc.adaptive_beta1);
  detail::maybe(obj, "adaptive_beta2", fc.adaptive_beta2);
  detail::maybe(obj, "adaptive_eps", fc.adaptive_eps);
  detail::maybe(obj, "convergence_tol", fc.convergence_tol);
  detail::maybe(obj, "seed", fc.seed);
  detail::maybe(obj, "scale_min_m", fc.scale_min_m);
  detail::maybe(obj, "scale_max_m", fc.scale_max_m);
  detail::maybe(obj, "extract_top_fraction", fc.extract_top_fraction);
  if (obj.contains("loss_weights")) fc.loss_weights = loss_weights_from_json(obj.at("loss_weights"));
  fc.validate();
  return fc;
}

inline CfarConfig cfar_from_json(const nlohmann::json& obj) {
  CfarConfig c;
  detail::reject_unknown_keys(obj, {"guard_cells", "train_cells", "pfa", "axes"}, "cfar");
  detail::maybe(obj, "guard_cells", c.guard_cells);
  detail::maybe(obj, "train_cells", c.train_cells);
  detail::maybe(obj, "pfa", c.pfa);
  if (obj.contains("axes")) {
    c.axis_range = false;
    c.axis_angle = false;
    for (const auto& a : obj.at("axes")) {
      const std::string s = a.get<std::string>();
      if (s == "range")
        c.axis_range = true;
      else if (s == "angle")
        c.axis_angle = true;
      else
        throw Error(ErrorKind::Config, "unknown CFAR axis '" + s + "'");
    }
  }
  c.validate();
  return c;
}

inline Skeleton skeleton_from_json(const nlohmann::json& obj) {
  detail::reject_unknown_keys(obj, {"joint_names", "edges", "tpose_positions_m"}, "skeleton");
  try {
    std::vector<std::string> names = obj.at("joint_names").get<std::vector<std::string>>();
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : obj.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    std::vector<Vec3> tpose;
    for (const auto& p : obj.at("tpose_positions_m"))
      tpose.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    return Skeleton::build(std::move(names), std::move(edges), std::move(tpose));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, "bad skeleton config: " + std::string(e.what()));
  }
}

inline nlohmann::json skeleton_to_json(const Skeleton& sk) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : sk.edges) edges.push_back({i, j});
  nlohmann::json tpose = nlohmann::json::array();
  for (const auto& p : sk.tpose_positions_m) tpose.push_back({p.x, p.y, p.z});
  return {{"joint_names", sk.joint_names}, {"edges", edges}, {"tpose_positions_m", tpose}};
}

inline SceneSpec scene_from_json(const nlohmann::json& obj) {
  SceneSpec spec;
  detail::reject_unknown_keys(
      obj, {"motion", "amplitude_m", "period_s", "speed_mps", "stride_period_s", "anchor_m",
            "frames", "dt_s", "clutter_points", "clutter_intensity_rel", "noise_snr_db", "seed"},
      "scene");
  if (obj.contains("motion")) spec.motion = motion_kind_from_string(obj.at("motion").get<std::string>());
  detail::maybe(obj, "amplitude_m", spec.amplitude_m);
  detail::maybe(obj, "period_s", spec.period_s);
  detail::maybe(obj, "speed_mps", spec.speed_mps);
  detail::maybe(obj, "stride_period_s", spec.stride_period_s);
  detail::maybe_vec3(obj, "anchor_m", spec.anchor_m);
  detail::maybe(obj, "frames", spec.frames);
  detail::maybe(obj, "dt_s", spec.dt_s);
  detail::maybe(obj, "clutter_points", spec.clutter_points);
  detail::maybe(obj, "clutter_intensity_rel", spec.clutter_intensity_rel);
  if (obj.contains("noise_snr_db") && !obj.at("noise_snr_db").is_null()) {
    double snr = 0.0;
    detail::maybe(obj, "noise_snr_db", snr);
    spec.noise_snr_db = snr;
  }
  detail::maybe(obj, "seed", spec.seed);
  spec.validate();
  return spec;
}

inline nlohmann::json scene_to_json(const SceneSpec& spec) {
  nlohmann::json j = {{"motion", motion_kind_name(spec.motion)},
                      {"amplitude_m", spec.amplitude_m},
                      {"period_s", spec.period_s},
                      {"speed_mps", spec.speed_mps},
                      {"stride_period_s", spec.stride_period_s},
                      {"anchor_m", {spec.anchor_m.x, spec.anchor_m.y, spec.anchor_m.z}},
                      {"frames", spec.frames},
                      {"dt_s", spec.dt_s},
                      {"clutter_points", spec.clutter_points},
                      {"clutter_intensity_rel", spec.clutter_intensity_rel},
                      {"seed", spec.seed}};
  if (spec.noise_snr_db)
    j["noise_snr_db"] = *spec.noise_snr_db;
  else
    j["noise_snr_db"] = nullptr;
  return j;
}

// Ground-truth pose document written by `synth` and consumed by `eval`.
inline nlohmann::json poses_to_json(const GroundTruthSequence& gt,
                                    const std::vector<std::string>& joint_names) {
  nlohmann::json poses = nlohmann::json::array();
  for (const auto& frame : gt.poses) {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& p : frame) f.push_back({p.x, p.y, p.z});
    poses.push_back(std::move(f));
  }
  nlohmann::json vels = nlohmann::json::array();
  for (const auto& frame : gt.velocities) {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& v : frame) f.push_back({v.x, v.y, v.z});
    vels.push_back(std::move(f));
  }
  return {{"dt_s", gt.dt_s}, {"joint_names", joint_names}, {"poses", poses}, {"velocities", vels}};
}

inline std::vector<std::vector<Vec3>> poses_from_json(const nlohmann::json& doc) {
  std::vector<std::vector<Vec3>> out;
  try {
    for (const auto& frame : doc.at("poses")) {
      std::vector<Vec3> f;
      for (const auto& p : frame)
        f.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
      out.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, "bad pose document: " + std::string(e.what()));
  }
  return out;
}

}  // namespace mgs
