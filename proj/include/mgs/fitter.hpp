#pragma once

#include <algorithm>
#include <chrono>
#include <limits>
#include <optional>

#include "mgs/cfar.hpp"
#include "mgs/grad.hpp"

namespace mgs {

struct FitConfig {
  int max_iters = 500;
  double lr_position = 1e-2;
  double lr_scale = 1e-3;
  double lr_rotation = 1e-2;
  double lr_velocity = 1e-2;
  double lr_opacity = 1e-2;
  double lr_doppler = 1e-2;
  double adaptive_beta1 = 0.9;
  double adaptive_beta2 = 0.999;
  double adaptive_eps = 1e-8;
  double convergence_tol = 1e-6;
  double stationary_grad_tol = 1e-12;  // stop when the gradient vanishes
  double lr_decay_floor = 0.05;        // cosine decay floor as a fraction of lr
  LossWeights loss_weights;
  std::uint64_t seed = 0;
  double scale_min_m = 0.02;
  double scale_max_m = 0.5;
  double extract_top_fraction = 0.01;

  void validate() const {
    if (max_iters < 1) throw Error(ErrorKind::Config, "max_iters must be at least 1");
    if (!(lr_position > 0.0) || !(lr_scale > 0.0) || !(lr_rotation > 0.0) ||
        !(lr_velocity > 0.0) || !(lr_opacity > 0.0) || !(lr_doppler > 0.0))
      throw Error(ErrorKind::Config, "step sizes must be strictly positive");
    if (!(adaptive_beta1 >= 0.0 && adaptive_beta1 < 1.0) ||
        !(adaptive_beta2 >= 0.0 && adaptive_beta2 < 1.0))
      throw Error(ErrorKind::Config, "moment decay factors must lie in [0, 1)");
    if (!(adaptive_eps > 0.0)) throw Error(ErrorKind::Config, "adaptive_eps must be positive");
    if (!(convergence_tol > 0.0)) throw Error(ErrorKind::Config, "convergence_tol must be positive");
    if (!(stationary_grad_tol >= 0.0))
      throw Error(ErrorKind::Config, "stationary_grad_tol must be non-negative");
    if (!(lr_decay_floor > 0.0 && lr_decay_floor <= 1.0))
      throw Error(ErrorKind::Config, "lr_decay_floor must lie in (0, 1]");
    if (!(scale_min_m > 0.0) || !(scale_max_m > scale_min_m))
      throw Error(ErrorKind::Config, "scale clamp must satisfy 0 < min < max");
    loss_weights.validate();
  }

  double learning_rate(ParamGroup g) const {
    switch (g) {
      case ParamGroup::Position: return lr_position;
      case ParamGroup::Scale: return lr_scale;
      case ParamGroup::Rotation: return lr_rotation;
      case ParamGroup::Velocity: return lr_velocity;
      case ParamGroup::Opacity: return lr_opacity;
      case ParamGroup::Doppler: return lr_doppler;
    }
    return lr_position;
  }
};

struct FitReport {
  double final_loss = 0.0;
  std::vector<double> loss_trace;
  int iterations_run = 0;
  bool converged = false;
  double wall_time_s = 0.0;
};

namespace detail {

// Manifold projections applied after every step: unit quaternions, clamped
// scales, non-negative opacity, simplex Doppler features.
inline void project_frame(DiprFrame& frame, const FitConfig& fc) {
  for (auto& j : frame.joints) {
    j.rotation = j.rotation.normalized();
    j.scale_m.x = std::clamp(j.scale_m.x, fc.scale_min_m, fc.scale_max_m);
    j.scale_m.y = std::clamp(j.scale_m.y, fc.scale_min_m, fc.scale_max_m);
    j.scale_m.z = std::clamp(j.scale_m.z, fc.scale_min_m, fc.scale_max_m);
    j.opacity = std::max(j.opacity, 0.0);
    double sum = 0.0;
    for (auto& f : j.doppler_features) {
      f = std::max(f, 0.0);
      sum += f;
    }
    if (sum > 0.0)
      for (auto& f : j.doppler_features) f /= sum;
    else
      for (auto& f : j.doppler_features) f = 1.0 / static_cast<double>(j.doppler_features.size());
  }
}

}  // namespace detail

// Adaptive first-order descent on the total loss with per-group step sizes
// and bias-corrected moment estimates. The returned frame is the best
// iterate observed, so final_loss never exceeds loss_trace[0].
inline std::pair<DiprFrame, FitReport> fit_frame(const Heatmap& h_obs, const Skeleton& sk,
                                                 const RadarParams& rp, const HeatmapGrid& grid,
                                                 const RenderKernelParams& kp, const FitConfig& fc,
                                                 const std::optional<DiprFrame>& init = {}) {
  fc.validate();
  rp.validate();
  if (!(h_obs.grid == grid))
    throw Error(ErrorKind::Shape, "observed heatmap grid does not match fit grid");
  const auto t_start = std::chrono::steady_clock::now();

  DiprFrame frame;
  if (init) {
    frame = *init;
    frame.validate(sk);
  } else {
    const CoarseState cs = extract_coarse(h_obs, fc.extract_top_fraction);
    frame = init_from_coarse(sk, cs);
  }

  const ParamLayout layout = ParamLayout::of(frame);
  std::vector<double> x = flatten_frame(frame);
  std::vector<double> m1(x.size(), 0.0), m2(x.size(), 0.0);

  FitReport report;
  DiprFrame best_frame = frame;
  double best_loss = std::numeric_limits<double>::infinity();
  double prev_loss = std::numeric_limits<double>::quiet_NaN();
  int stable_iters = 0;

  for (int it = 0; it < fc.max_iters; ++it) {
    const TotalLossResult res = total_loss(frame, h_obs, sk, rp, grid, kp, fc.loss_weights);
    if (!std::isfinite(res.loss))
      throw Error(ErrorKind::Fit, "non-finite loss at iteration " + std::to_string(it));
    report.loss_trace.push_back(res.loss);
    if (res.loss < best_loss) {
      best_loss = res.loss;
      best_frame = frame;
    }

    if (std::isfinite(prev_loss)) {
      const double rel = std::abs(res.loss - prev_loss) / std::max(std::abs(prev_loss), 1e-12);
      stable_iters = (rel < fc.convergence_tol) ? stable_iters + 1 : 0;
      if (stable_iters >= 10) {
        report.converged = true;
        break;
      }
    }
    prev_loss = res.loss;

    const std::vector<double> g = flatten_gradients(res.gradients);
    double g_max = 0.0;
    for (double v : g) g_max = std::max(g_max, std::abs(v));
    // First-order stationarity: the adaptive step normalizes away gradient
    // magnitude, so a vanishing gradient must terminate explicitly or the
    // optimizer would march off a perfect optimum at full step size.
    if (g_max <= fc.stationary_grad_tol) {
      report.converged = true;
      break;
    }

    const double b1 = fc.adaptive_beta1, b2 = fc.adaptive_beta2;
    const double c1 = 1.0 - std::pow(b1, it + 1);
    const double c2 = 1.0 - std::pow(b2, it + 1);
    const double anneal =
        fc.lr_decay_floor +
        (1.0 - fc.lr_decay_floor) * 0.5 * (1.0 + std::cos(kPi * it / std::max(fc.max_iters - 1, 1)));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
      m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m1[i] / c1;
      const double vhat = m2[i] / c2;
      const double lr = anneal * fc.learning_rate(layout.locate(i).group);
      x[i] -= lr * mhat / (std::sqrt(vhat) + fc.adaptive_eps);
    }
    frame = unflatten_frame(layout, x, frame.timestamp_s);
    detail::project_frame(frame, fc);
    x = flatten_frame(frame);
  }

  report.iterations_run = static_cast<int>(report.loss_trace.size());
  report.final_loss = best_loss;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {best_frame, report};
}

// Temporal chaining: frame t warm-starts from the fitted frame t-1.
inline std::vector<std::pair<DiprFrame, FitReport>> fit_sequence(
    const std::vector<Heatmap>& frames, const Skeleton& sk, const RadarParams& rp,
    const HeatmapGrid& grid, const RenderKernelParams& kp, const FitConfig& fc) {
  std::vector<std::pair<DiprFrame, FitReport>> out;
  out.reserve(frames.size());
  std::optional<DiprFrame> warm;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!(frames[t].grid == grid))
      throw Error(ErrorKind::Shape, "sequence frame " + std::to_string(t) + " grid mismatch");
    try {
      out.push_back(fit_frame(frames[t], sk, rp, grid, kp, fc, warm));
    } catch (const Error& e) {
      throw Error(e.kind(), "frame " + std::to_string(t) + ": " + e.what());
    }
    warm = out.back().first;
  }
  return out;
}

// DIPR-HM: exported conversion entry point.
inline Heatmap dipr_to_heatmap(const DiprFrame& frame, const RadarParams& rp,
                               const HeatmapGrid& grid, const RenderKernelParams& kp) {
  return render(frame, rp, grid, kp);
}

// DIPR-PC: CFAR processing over the re-rendered heatmap.
inline PointCloud dipr_to_pointcloud(const DiprFrame& frame, const RadarParams& rp,
                                     const HeatmapGrid& grid, const RenderKernelParams& kp,
                                     const CfarConfig& cfg) {
  return ca_cfar(dipr_to_heatmap(frame, rp, grid, kp), cfg);
}

inline nlohmann::json fit_report_to_json(const FitReport& r) {
  // wall time is intentionally omitted so documents stay byte-reproducible
  return {{"final_loss", r.final_loss},
          {"iterations_run", r.iterations_run},
          {"converged", r.converged},
          {"loss_trace", r.loss_trace}};
}

}  // namespace mgs
