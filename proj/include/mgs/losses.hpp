#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mgs/renderer.hpp"

namespace mgs {

struct LossWeights {
  double lambda1 = 0.5;        // bone vs velocity balance
  double lambda2 = 0.3;        // reconstruction vs kinesiological balance
  double top_fraction_T = 0.10;
  double softness_tau = 0.1;   // soft-mask temperature
  // Peak-relative floor of the logistic scale. The scale is
  // tau * (t + mask_floor_rel * max), so the mask stays differentiable when
  // the top-fraction threshold t degenerates toward zero on sparse-support
  // heatmaps, stays scale invariant, and still hardens as tau -> 0.
  double mask_floor_rel = 0.05;

  void validate() const {
    if (!(lambda1 >= 0.0 && lambda1 <= 1.0) || !(lambda2 >= 0.0 && lambda2 <= 1.0))
      throw Error(ErrorKind::Config, "lambda weights must lie in [0, 1]");
    if (!(top_fraction_T > 0.0 && top_fraction_T <= 1.0))
      throw Error(ErrorKind::Config, "top_fraction_T must lie in (0, 1]");
    if (!(softness_tau > 0.0))
      throw Error(ErrorKind::Config, "softness_tau must be positive");
    if (!(mask_floor_rel >= 0.0))
      throw Error(ErrorKind::Config, "mask_floor_rel must be non-negative");
  }
};

// Smallest value t such that at least ceil(T * n) cells satisfy value >= t;
// i.e. the k-th largest value with ties included.
inline double top_fraction_threshold(const std::vector<double>& values, double top_fraction) {
  if (values.empty()) throw Error(ErrorKind::Shape, "threshold of empty value set");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0))
    throw Error(ErrorKind::Domain, "top fraction must lie in (0, 1]");
  const std::size_t k = std::min(
      values.size(),
      static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(values.size()))));
  std::vector<double> tmp(values);
  std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k - 1), tmp.end(),
                   std::greater<double>());
  return tmp[k - 1];
}

namespace detail {

inline bool all_zero(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Logistic scale of the soft mask; see LossWeights::mask_floor_rel.
inline double mask_scale(const std::vector<double>& values, double threshold,
                         const LossWeights& w) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  return w.softness_tau * (threshold + w.mask_floor_rel * peak) + 1e-300;
}

// Soft top-fraction mask. An identically zero heatmap has the empty mask.
inline std::vector<double> soft_mask(const std::vector<double>& values, double threshold,
                                     double scale) {
  std::vector<double> mask(values.size(), 0.0);
  if (all_zero(values)) return mask;
  for (std::size_t i = 0; i < values.size(); ++i)
    mask[i] = logistic((values[i] - threshold) / scale);
  return mask;
}

}  // namespace detail

// Threshold and logistic scale of the rendered-side mask, held constant in
// differentiation and during finite-difference evaluation of the same
// composed function.
struct MaskFreeze {
  double threshold = 0.0;
  double scale = 0.0;
};

struct ReconEval {
  double loss = 0.0;
  double threshold_dipr = 0.0;
  double threshold_obs = 0.0;
  MaskFreeze freeze_dipr;
  std::vector<double> d_loss_d_dipr;  // w.r.t. h_dipr cell values; empty unless requested
};

// Soft-IoU style reconstruction loss between rendered and observed heatmaps.
// Intersection is the mask inner product and the union follows the
// Tanimoto/inclusion-exclusion form |d|^2 + |o|^2 - <d,o>, which reduces to
// set IoU on binary masks and vanishes exactly for identical inputs.
// The rendered-side mask threshold and scale are held constant in
// differentiation; pass `frozen` to evaluate the same differentiated
// function at a perturbed point.
inline ReconEval recon_loss_eval(const Heatmap& h_dipr, const Heatmap& h_obs,
                                 const LossWeights& w, bool with_grad,
                                 std::optional<MaskFreeze> frozen = {}) {
  if (!(h_dipr.grid == h_obs.grid))
    throw Error(ErrorKind::Shape, "recon loss requires matching grids");
  w.validate();

  ReconEval ev;
  ev.threshold_dipr = frozen ? frozen->threshold
                             : top_fraction_threshold(h_dipr.values, w.top_fraction_T);
  ev.threshold_obs = top_fraction_threshold(h_obs.values, w.top_fraction_T);
  const double scale_dipr =
      frozen ? frozen->scale : detail::mask_scale(h_dipr.values, ev.threshold_dipr, w);
  const double scale_obs = detail::mask_scale(h_obs.values, ev.threshold_obs, w);
  ev.freeze_dipr = {ev.threshold_dipr, scale_dipr};
  const auto d = detail::soft_mask(h_dipr.values, ev.threshold_dipr, scale_dipr);
  const auto o = detail::soft_mask(h_obs.values, ev.threshold_obs, scale_obs);

  double inter = 0.0, dd = 0.0, oo = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    inter += d[i] * o[i];
    dd += d[i] * d[i];
    oo += o[i] * o[i];
  }
  const double uni = dd + oo - inter;
  if (uni <= 0.0) {
    ev.loss = 0.0;  // both masks empty
    if (with_grad) ev.d_loss_d_dipr.assign(d.size(), 0.0);
    return ev;
  }
  ev.loss = 1.0 - inter / uni;

  if (with_grad) {
    ev.d_loss_d_dipr.assign(d.size(), 0.0);
    if (!detail::all_zero(h_dipr.values)) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        // d(1 - I/U)/d d_i with U = dd + oo - I
        const double dJ = -(o[i] * uni - inter * (2.0 * d[i] - o[i])) / (uni * uni);
        const double dmask = d[i] * (1.0 - d[i]) / scale_dipr;  // logistic derivative
        ev.d_loss_d_dipr[i] = dJ * dmask;
      }
    }
  }
  return ev;
}

inline double recon_loss(const Heatmap& h_dipr, const Heatmap& h_obs, const LossWeights& w) {
  return recon_loss_eval(h_dipr, h_obs, w, false).loss;
}

inline double bone_loss(const DiprFrame& frame, const Skeleton& sk) {
  if (frame.joints.size() != static_cast<std::size_t>(sk.joint_count()))
    throw Error(ErrorKind::Shape, "frame joint count does not match skeleton");
  double loss = 0.0;
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const auto& [i, j] = sk.edges[e];
    const double len = (frame.joints[static_cast<std::size_t>(i)].position_m -
                        frame.joints[static_cast<std::size_t>(j)].position_m)
                           .norm();
    const double diff = len - sk.bone_lengths_m[e];
    loss += diff * diff;
  }
  return loss;
}

// Relative velocity of adjacent joints projected on the bone direction.
inline double velocity_loss(const DiprFrame& frame, const Skeleton& sk) {
  if (frame.joints.size() != static_cast<std::size_t>(sk.joint_count()))
    throw Error(ErrorKind::Shape, "frame joint count does not match skeleton");
  double loss = 0.0;
  for (const auto& [i, j] : sk.edges) {
    const Vec3 d = frame.joints[static_cast<std::size_t>(i)].position_m -
                   frame.joints[static_cast<std::size_t>(j)].position_m;
    const double len = d.norm();
    if (!(len > 1e-6))
      throw Error(ErrorKind::Domain, "velocity loss undefined for coincident adjacent joints");
    const double s = (frame.joints[static_cast<std::size_t>(i)].velocity_mps -
                      frame.joints[static_cast<std::size_t>(j)].velocity_mps)
                         .dot(d) /
                     len;
    loss += s * s;
  }
  return loss;
}

inline double kine_loss(const DiprFrame& frame, const Skeleton& sk, const LossWeights& w) {
  w.validate();
  return w.lambda1 * bone_loss(frame, sk) + (1.0 - w.lambda1) * velocity_loss(frame, sk);
}

// Analytic gradients of kine_loss; only position and velocity receive
// non-zero entries.
inline FrameGradients kine_gradients(const DiprFrame& frame, const Skeleton& sk,
                                     const LossWeights& w) {
  FrameGradients g;
  g.joints.resize(frame.joints.size());
  for (std::size_t ji = 0; ji < frame.joints.size(); ++ji)
    g.joints[ji].doppler_features.assign(frame.joints[ji].doppler_features.size(), 0.0);

  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const auto& [i, j] = sk.edges[e];
    auto& gi = g.joints[static_cast<std::size_t>(i)];
    auto& gj = g.joints[static_cast<std::size_t>(j)];
    const Vec3 d = frame.joints[static_cast<std::size_t>(i)].position_m -
                   frame.joints[static_cast<std::size_t>(j)].position_m;
    const double len = d.norm();
    if (!(len > 1e-6))
      throw Error(ErrorKind::Domain, "kine gradient undefined for coincident adjacent joints");
    const Vec3 dir = d / len;

    const double diff = len - sk.bone_lengths_m[e];
    const Vec3 gb = dir * (2.0 * diff * w.lambda1);
    gi.position += gb;
    gj.position += -gb;

    const Vec3 dv = frame.joints[static_cast<std::size_t>(i)].velocity_mps -
                    frame.joints[static_cast<std::size_t>(j)].velocity_mps;
    const double s = dv.dot(dir);
    const double wv = 1.0 - w.lambda1;
    const Vec3 gvel = dir * (2.0 * s * wv);
    gi.velocity += gvel;
    gj.velocity += -gvel;
    const Vec3 gpos = (dv - s * dir) * (2.0 * s * wv / len);
    gi.position += gpos;
    gj.position += -gpos;
  }
  return g;
}

struct TotalLossResult {
  double loss = 0.0;
  double recon = 0.0;
  double kine = 0.0;
  double threshold_dipr = 0.0;
  MaskFreeze freeze_dipr;
  FrameGradients gradients;
};

// L_total = lambda2 * L_recon(render(frame), h_obs) + (1 - lambda2) * L_kine,
// with gradients for every continuous DIPR parameter. The recon mask
// threshold is recomputed here and treated as a constant in differentiation.
inline TotalLossResult total_loss(const DiprFrame& frame, const Heatmap& h_obs,
                                  const Skeleton& sk, const RadarParams& rp,
                                  const HeatmapGrid& grid, const RenderKernelParams& kp,
                                  const LossWeights& w) {
  if (!(h_obs.grid == grid)) throw Error(ErrorKind::Shape, "observed heatmap grid mismatch");
  w.validate();

  TotalLossResult out;
  out.gradients.joints.resize(frame.joints.size());
  for (std::size_t ji = 0; ji < frame.joints.size(); ++ji)
    out.gradients.joints[ji].doppler_features.assign(frame.joints[ji].doppler_features.size(),
                                                     0.0);

  if (w.lambda2 > 0.0) {
    Heatmap h_dipr = render(frame, rp, grid, kp);
    auto recon = recon_loss_eval(h_dipr, h_obs, w, true);
    out.recon = recon.loss;
    out.threshold_dipr = recon.threshold_dipr;
    out.freeze_dipr = recon.freeze_dipr;
    for (double& a : recon.d_loss_d_dipr) a *= w.lambda2;
    out.gradients = render_with_gradients(frame, rp, grid, kp, recon.d_loss_d_dipr);
  }
  if (w.lambda2 < 1.0) {
    out.kine = kine_loss(frame, sk, w);
    const FrameGradients kg = kine_gradients(frame, sk, w);
    const double wk = 1.0 - w.lambda2;
    for (std::size_t ji = 0; ji < frame.joints.size(); ++ji) {
      out.gradients.joints[ji].position += kg.joints[ji].position * wk;
      out.gradients.joints[ji].velocity += kg.joints[ji].velocity * wk;
    }
  }
  out.loss = w.lambda2 * out.recon + (1.0 - w.lambda2) * out.kine;
  return out;
}

// Value-only variant evaluating the same function total_loss differentiates:
// the rendered-mask threshold and scale can be frozen to caller-supplied
// constants.
inline double total_loss_value(const DiprFrame& frame, const Heatmap& h_obs, const Skeleton& sk,
                               const RadarParams& rp, const HeatmapGrid& grid,
                               const RenderKernelParams& kp, const LossWeights& w,
                               std::optional<MaskFreeze> frozen = {}) {
  double recon = 0.0;
  if (w.lambda2 > 0.0) {
    const Heatmap h_dipr = render(frame, rp, grid, kp);
    recon = recon_loss_eval(h_dipr, h_obs, w, false, frozen).loss;
  }
  const double kine = (w.lambda2 < 1.0) ? kine_loss(frame, sk, w) : 0.0;
  return w.lambda2 * recon + (1.0 - w.lambda2) * kine;
}

}  // namespace mgs
