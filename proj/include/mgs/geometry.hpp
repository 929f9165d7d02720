#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mgs/core.hpp"

namespace mgs {

// Coarse per-cell position/velocity state extracted from a heatmap; the
// intensity-weighted seed for DIPR initialization.
struct CoarseState {
  std::vector<Vec3> positions_m;
  std::vector<Vec3> velocities_mps;
  std::vector<double> weights;

  std::size_t size() const { return positions_m.size(); }
  bool empty() const { return positions_m.empty(); }
};

struct Spherical {
  double range = 0.0;
  double azimuth = 0.0;
  double elevation = 0.0;
};

inline Vec3 spherical_to_cartesian(double r, double az, double el) {
  constexpr double kHalfPi = 1.5707963267948966;
  if (!(r >= 0.0)) throw Error(ErrorKind::Domain, "range must be non-negative");
  if (!(std::abs(az) < kHalfPi) || !(std::abs(el) < kHalfPi))
    throw Error(ErrorKind::Domain, "angles must satisfy |az|, |el| < pi/2");
  const double ce = std::cos(el);
  return {r * ce * std::cos(az), r * ce * std::sin(az), r * std::sin(el)};
}

inline Spherical cartesian_to_spherical(const Vec3& p) {
  if (!(p.x > 0.0))
    throw Error(ErrorKind::Domain, "cartesian_to_spherical requires p.x > 0 (in front of array)");
  const double rho = std::sqrt(p.x * p.x + p.y * p.y);
  return {p.norm(), std::atan2(p.y, p.x), std::atan2(p.z, rho)};
}

inline double radial_velocity(const Vec3& p, const Vec3& v) {
  const double r = p.norm();
  if (!(r > 0.0)) throw Error(ErrorKind::Domain, "radial velocity undefined at the origin");
  return v.dot(p) / r;
}

// Top-fraction cell selection without a hard CFAR threshold; keeps relative
// intensity relationships. Ties break toward the lower flat index and
// zero-intensity cells among the selected are dropped.
inline CoarseState extract_coarse(const Heatmap& h, double top_fraction) {
  if (!(top_fraction > 0.0) || !(top_fraction <= 1.0))
    throw Error(ErrorKind::Domain, "top_fraction must lie in (0, 1]");
  const std::size_t cells = h.grid.cells();
  const std::size_t keep =
      std::min(cells, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(cells))));

  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (h.values[a] != h.values[b]) return h.values[a] > h.values[b];
                      return a < b;
                    });

  CoarseState cs;
  cs.positions_m.reserve(keep);
  cs.velocities_mps.reserve(keep);
  cs.weights.reserve(keep);
  const int vbins = h.grid.doppler_bins;
  const int abins = h.grid.angle_bins;
  for (std::size_t s = 0; s < keep; ++s) {
    const std::size_t idx = order[s];
    const double value = h.values[idx];
    if (!(value > 0.0)) continue;
    const int n = static_cast<int>(idx % static_cast<std::size_t>(abins));
    const int m = static_cast<int>((idx / static_cast<std::size_t>(abins)) %
                                   static_cast<std::size_t>(vbins));
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(abins) *
                                          static_cast<std::size_t>(vbins)));
    const double r = h.grid.range_center(k);
    const double az = h.grid.angle_center(n);
    const double el = 0.0;  // grid carries no elevation axis
    const double v_d = h.grid.doppler_center(m);
    const double v_r = v_d / (std::cos(az) * std::cos(el));
    cs.positions_m.push_back(spherical_to_cartesian(r, az, el));
    cs.velocities_mps.push_back({v_r * std::cos(az), v_r * std::sin(az), v_r * std::sin(el)});
    cs.weights.push_back(value);
  }
  return cs;
}

// Doppler-free velocity proxy: frame difference over the range-angle
// marginal. Stands in for the Doppler axis when the input lacks one.
struct MarginalGrid {
  int range_bins = 0;
  int angle_bins = 0;
  std::vector<double> values;  // row-major, angle innermost

  double& at(int k, int n) { return values[static_cast<std::size_t>(k * angle_bins + n)]; }
  double at(int k, int n) const { return values[static_cast<std::size_t>(k * angle_bins + n)]; }
};

inline MarginalGrid temporal_velocity(const Heatmap& prev, const Heatmap& curr, double dt) {
  if (!(prev.grid == curr.grid))
    throw Error(ErrorKind::Shape, "temporal_velocity requires matching grids");
  if (!(dt > 0.0)) throw Error(ErrorKind::Domain, "dt must be positive");
  MarginalGrid out;
  out.range_bins = curr.grid.range_bins;
  out.angle_bins = curr.grid.angle_bins;
  out.values.assign(static_cast<std::size_t>(out.range_bins) * out.angle_bins, 0.0);
  for (int k = 0; k < curr.grid.range_bins; ++k)
    for (int m = 0; m < curr.grid.doppler_bins; ++m)
      for (int n = 0; n < curr.grid.angle_bins; ++n)
        out.at(k, n) += (curr.at(k, m, n) - prev.at(k, m, n)) / dt;
  return out;
}

}  // namespace mgs
