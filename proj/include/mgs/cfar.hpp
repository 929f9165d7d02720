#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "mgs/core.hpp"
#include "mgs/geometry.hpp"

namespace mgs {

// Cell-averaging CFAR over the (range, angle) plane of each Doppler slice.
struct CfarConfig {
  int guard_cells = 2;
  int train_cells = 4;
  double pfa = 1e-3;
  bool axis_range = true;
  bool axis_angle = true;

  void validate() const {
    if (!(pfa > 0.0 && pfa < 1.0)) throw Error(ErrorKind::Config, "pfa must lie in (0, 1)");
    if (guard_cells < 0) throw Error(ErrorKind::Config, "guard_cells must be non-negative");
    if (train_cells < 1) throw Error(ErrorKind::Config, "train_cells must be at least 1");
    if (!axis_range && !axis_angle)
      throw Error(ErrorKind::Config, "CFAR window needs at least one active axis");
  }

  int train_count() const {
    const int full_r = axis_range ? 2 * (guard_cells + train_cells) + 1 : 1;
    const int full_a = axis_angle ? 2 * (guard_cells + train_cells) + 1 : 1;
    const int guard_r = axis_range ? 2 * guard_cells + 1 : 1;
    const int guard_a = axis_angle ? 2 * guard_cells + 1 : 1;
    return full_r * full_a - guard_r * guard_a;
  }

  // alpha = N (pfa^{-1/N} - 1)
  double scale_factor() const {
    const double n = static_cast<double>(train_count());
    return n * (std::pow(pfa, -1.0 / n) - 1.0);
  }
};

namespace detail {

inline PointCloud::Point cfar_point(const Heatmap& h, int k, int m, int n) {
  PointCloud::Point pt;
  pt.position_m = spherical_to_cartesian(h.grid.range_center(k), h.grid.angle_center(n), 0.0);
  pt.radial_velocity_mps = h.grid.doppler_center(m);
  pt.intensity = h.at(k, m, n);
  return pt;
}

}  // namespace detail

// Sliding implementation backed by per-slice summed-area tables. Border
// cells whose window exits the grid are never detected. Detections are
// emitted in ascending flat-index order.
inline PointCloud ca_cfar(const Heatmap& h, const CfarConfig& cfg) {
  cfg.validate();
  h.grid.validate();
  const int rbins = h.grid.range_bins;
  const int vbins = h.grid.doppler_bins;
  const int abins = h.grid.angle_bins;
  const int reach_r = cfg.axis_range ? cfg.guard_cells + cfg.train_cells : 0;
  const int reach_a = cfg.axis_angle ? cfg.guard_cells + cfg.train_cells : 0;
  if (2 * reach_r + 1 > rbins || 2 * reach_a + 1 > abins)
    throw Error(ErrorKind::Config, "CFAR window does not fit inside the grid");

  const double alpha = cfg.scale_factor();
  const double n_train = static_cast<double>(cfg.train_count());
  const int guard_r = cfg.axis_range ? cfg.guard_cells : 0;
  const int guard_a = cfg.axis_angle ? cfg.guard_cells : 0;

  // integral[i][j] = sum of slice cells with range < i, angle < j
  std::vector<double> integral(static_cast<std::size_t>((rbins + 1) * (abins + 1)));
  auto iat = [&](int i, int j) -> double& {
    return integral[static_cast<std::size_t>(i * (abins + 1) + j)];
  };
  auto box_sum = [&](int k_lo, int k_hi, int n_lo, int n_hi) {
    return iat(k_hi + 1, n_hi + 1) - iat(k_lo, n_hi + 1) - iat(k_hi + 1, n_lo) + iat(k_lo, n_lo);
  };

  std::vector<std::array<int, 3>> cells;  // detections as (k, m, n)
  for (int m = 0; m < vbins; ++m) {
    for (int i = 0; i <= rbins; ++i) iat(i, 0) = 0.0;
    for (int j = 0; j <= abins; ++j) iat(0, j) = 0.0;
    for (int k = 0; k < rbins; ++k)
      for (int n = 0; n < abins; ++n)
        iat(k + 1, n + 1) = h.at(k, m, n) + iat(k, n + 1) + iat(k + 1, n) - iat(k, n);

    for (int k = reach_r; k < rbins - reach_r; ++k) {
      for (int n = reach_a; n < abins - reach_a; ++n) {
        const double full = box_sum(k - reach_r, k + reach_r, n - reach_a, n + reach_a);
        const double guard = box_sum(k - guard_r, k + guard_r, n - guard_a, n + guard_a);
        // cancellation in the prefix sums can leave a tiny negative residual
        const double noise = std::max(full - guard, 0.0) / n_train;
        if (h.at(k, m, n) > alpha * noise) cells.push_back({k, m, n});
      }
    }
  }

  std::sort(cells.begin(), cells.end());  // ascending flat index == lexicographic (k, m, n)
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [k, m, n] : cells) out.points.push_back(detail::cfar_point(h, k, m, n));
  return out;
}

// Reference detector: direct per-cell window enumeration, no shared state.
inline PointCloud brute_force_cfar_oracle(const Heatmap& h, const CfarConfig& cfg) {
  cfg.validate();
  h.grid.validate();
  const int rbins = h.grid.range_bins;
  const int vbins = h.grid.doppler_bins;
  const int abins = h.grid.angle_bins;
  const int reach_r = cfg.axis_range ? cfg.guard_cells + cfg.train_cells : 0;
  const int reach_a = cfg.axis_angle ? cfg.guard_cells + cfg.train_cells : 0;
  if (2 * reach_r + 1 > rbins || 2 * reach_a + 1 > abins)
    throw Error(ErrorKind::Config, "CFAR window does not fit inside the grid");

  const double alpha = cfg.scale_factor();
  const int guard_r = cfg.axis_range ? cfg.guard_cells : 0;
  const int guard_a = cfg.axis_angle ? cfg.guard_cells : 0;
  PointCloud out;
  for (int k = 0; k < rbins; ++k) {
    for (int m = 0; m < vbins; ++m) {
      for (int n = 0; n < abins; ++n) {
        if (k < reach_r || k >= rbins - reach_r || n < reach_a || n >= abins - reach_a) continue;
        double sum = 0.0;
        int count = 0;
        for (int dk = -reach_r; dk <= reach_r; ++dk) {
          for (int dn = -reach_a; dn <= reach_a; ++dn) {
            if (std::abs(dk) <= guard_r && std::abs(dn) <= guard_a) continue;
            sum += h.at(k + dk, m, n + dn);
            ++count;
          }
        }
        const double noise = sum / static_cast<double>(count);
        if (h.at(k, m, n) > alpha * noise) out.points.push_back(detail::cfar_point(h, k, m, n));
      }
    }
  }
  return out;
}

}  // namespace mgs
