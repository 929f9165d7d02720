#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mgs/core.hpp"
#include "mgs/losses.hpp"

namespace mgs {

// Skeleton-aligned per-frame joint positions.
struct PoseSequence {
  std::vector<std::vector<Vec3>> frames;

  void validate() const {
    if (frames.empty()) return;
    const std::size_t n = frames.front().size();
    for (const auto& f : frames)
      if (f.size() != n) throw Error(ErrorKind::Shape, "ragged pose sequence");
  }

  static PoseSequence of(std::vector<std::vector<Vec3>> frames) {
    PoseSequence s;
    s.frames = std::move(frames);
    s.validate();
    return s;
  }
};

inline double mpjpe(const PoseSequence& pred, const PoseSequence& gt) {
  if (pred.frames.size() != gt.frames.size())
    throw Error(ErrorKind::Shape, "pose sequences have different frame counts");
  pred.validate();
  gt.validate();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.frames.size(); ++t) {
    if (pred.frames[t].size() != gt.frames[t].size())
      throw Error(ErrorKind::Shape, "pose sequences have different joint counts");
    for (std::size_t j = 0; j < pred.frames[t].size(); ++j) {
      acc += (pred.frames[t][j] - gt.frames[t][j]).norm();
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::Metric, "mpjpe of empty sequences");
  return acc / static_cast<double>(count);
}

struct ProcrustesOptions {
  bool with_scale = true;  // full similarity alignment
};

namespace detail {

// Least-squares similarity alignment of x onto y. The rotation comes from
// the quaternion eigenvector of the cross-covariance (Horn), which always
// yields det +1, i.e. reflections are excluded.
struct Similarity {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;
  double scale = 1.0;
};

inline Similarity procrustes_fit(const std::vector<Vec3>& x, const std::vector<Vec3>& y,
                                 bool with_scale, std::size_t frame_index) {
  const std::size_t n = x.size();
  if (n < 3)
    throw Error(ErrorKind::Metric,
                "procrustes needs at least 3 joints (frame " + std::to_string(frame_index) + ")");
  Vec3 mx{}, my{};
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx = mx / static_cast<double>(n);
  my = my / static_cast<double>(n);

  Mat3 cov;  // sum (y - my)(x - mx)^T
  double var_x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = y[i] - my;
    const Vec3 b = x[i] - mx;
    cov(0, 0) += a.x * b.x; cov(0, 1) += a.x * b.y; cov(0, 2) += a.x * b.z;
    cov(1, 0) += a.y * b.x; cov(1, 1) += a.y * b.y; cov(1, 2) += a.y * b.z;
    cov(2, 0) += a.z * b.x; cov(2, 1) += a.z * b.y; cov(2, 2) += a.z * b.z;
    var_x += b.norm2();
  }

  // Degeneracy: collinear (or coincident) point sets.
  auto check_rank = [&](const std::vector<Vec3>& pts, const Vec3& mean) {
    std::array<double, 9> scatter{};
    for (const auto& p : pts) {
      const Vec3 d = p - mean;
      scatter[0] += d.x * d.x; scatter[1] += d.x * d.y; scatter[2] += d.x * d.z;
      scatter[3] += d.y * d.x; scatter[4] += d.y * d.y; scatter[5] += d.y * d.z;
      scatter[6] += d.z * d.x; scatter[7] += d.z * d.y; scatter[8] += d.z * d.z;
    }
    std::array<double, 3> vals{};
    std::array<double, 9> vecs{};
    jacobi_eigen_sym<3>(scatter, vals, vecs);
    std::array<double, 3> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    const double total = sorted[0] + sorted[1] + sorted[2];
    if (!(total > 0.0) || sorted[1] <= 1e-12 * total)
      throw Error(ErrorKind::Metric,
                  "degenerate (collinear) pose at frame " + std::to_string(frame_index));
  };
  check_rank(x, mx);
  check_rank(y, my);

  // Horn's 4x4 quaternion matrix from the cross-covariance.
  const double sxx = cov(0, 0), sxy = cov(0, 1), sxz = cov(0, 2);
  const double syx = cov(1, 0), syy = cov(1, 1), syz = cov(1, 2);
  const double szx = cov(2, 0), szy = cov(2, 1), szz = cov(2, 2);
  std::array<double, 16> nmat = {
      sxx + syy + szz, szy - syz,       sxz - szx,       syx - sxy,
      szy - syz,       sxx - syy - szz, sxy + syx,       szx + sxz,
      sxz - szx,       sxy + syx,       -sxx + syy - szz, syz + szy,
      syx - sxy,       szx + sxz,       syz + szy,       -sxx - syy + szz};
  std::array<double, 4> vals{};
  std::array<double, 16> vecs{};
  jacobi_eigen_sym<4>(nmat, vals, vecs);
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (vals[static_cast<std::size_t>(i)] > vals[static_cast<std::size_t>(best)]) best = i;
  const Quat q{vecs[static_cast<std::size_t>(0 * 4 + best)], vecs[static_cast<std::size_t>(1 * 4 + best)],
               vecs[static_cast<std::size_t>(2 * 4 + best)], vecs[static_cast<std::size_t>(3 * 4 + best)]};

  Similarity sim;
  sim.rotation = q.to_rotation();
  if (with_scale) {
    // optimal scale given R: sum <y_c, R x_c> / sum |x_c|^2
    double num = 0.0;
    for (std::size_t i = 0; i < n; ++i) num += (y[i] - my).dot(sim.rotation * (x[i] - mx));
    if (!(var_x > 0.0))
      throw Error(ErrorKind::Metric, "degenerate pose at frame " + std::to_string(frame_index));
    sim.scale = num / var_x;
  }
  sim.translation = my - sim.rotation * mx * sim.scale;
  return sim;
}

}  // namespace detail

// Procrustes-aligned MPJPE: per-frame similarity alignment of pred onto gt,
// then MPJPE on the aligned poses.
inline double pa_mpjpe(const PoseSequence& pred, const PoseSequence& gt,
                       const ProcrustesOptions& opts = {}) {
  if (pred.frames.size() != gt.frames.size())
    throw Error(ErrorKind::Shape, "pose sequences have different frame counts");
  pred.validate();
  gt.validate();
  PoseSequence aligned = pred;
  for (std::size_t t = 0; t < pred.frames.size(); ++t) {
    if (pred.frames[t].size() != gt.frames[t].size())
      throw Error(ErrorKind::Shape, "pose sequences have different joint counts");
    const auto sim = detail::procrustes_fit(pred.frames[t], gt.frames[t], opts.with_scale, t);
    for (auto& p : aligned.frames[t]) p = sim.rotation * p * sim.scale + sim.translation;
  }
  return mpjpe(aligned, gt);
}

// Mean joint displacement rate between consecutive frames; one value per
// interior transition.
inline std::vector<double> motion_intensity(const PoseSequence& seq, double dt) {
  seq.validate();
  if (seq.frames.size() < 2)
    throw Error(ErrorKind::Metric, "motion intensity needs at least two frames");
  if (!(dt > 0.0)) throw Error(ErrorKind::Domain, "dt must be positive");
  std::vector<double> out;
  out.reserve(seq.frames.size() - 1);
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j < seq.frames[t].size(); ++j)
      acc += (seq.frames[t][j] - seq.frames[t - 1][j]).norm() / dt;
    out.push_back(acc / static_cast<double>(seq.frames[t].size()));
  }
  return out;
}

// Hard top-fraction IoU, the reporting variant of the soft reconstruction
// loss. Identically zero heatmaps have empty masks; two empty masks count
// as IoU 1.
inline double hard_iou(const Heatmap& a, const Heatmap& b, double top_fraction) {
  if (!(a.grid == b.grid)) throw Error(ErrorKind::Shape, "hard_iou requires matching grids");
  const bool za = detail::all_zero(a.values);
  const bool zb = detail::all_zero(b.values);
  if (za || zb) return (za && zb) ? 1.0 : 0.0;
  const double ta = top_fraction_threshold(a.values, top_fraction);
  const double tb = top_fraction_threshold(b.values, top_fraction);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool ma = a.values[i] >= ta;
    const bool mb = b.values[i] >= tb;
    inter += (ma && mb) ? 1 : 0;
    uni += (ma || mb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace mgs
