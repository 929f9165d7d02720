#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "mgs/dipr.hpp"

namespace mgs {

// Rasterization widths for mapping continuous Gaussians onto the discrete
// grid. Sigmas are expressed in bins and floored per axis; kernels are
// truncated at truncation_sigmas.
struct RenderKernelParams {
  double range_sigma_floor_bins = 0.75;
  double doppler_sigma_floor_bins = 0.75;
  double angle_sigma_floor_bins = 0.75;
  double truncation_sigmas = 4.0;
  bool coherent = true;      // complex-field accumulation; false sums magnitudes
  double min_range_m = 0.1;  // path-loss singularity guard

  void validate() const {
    if (!(range_sigma_floor_bins > 0.0) || !(doppler_sigma_floor_bins > 0.0) ||
        !(angle_sigma_floor_bins > 0.0) || !(truncation_sigmas > 0.0) || !(min_range_m > 0.0))
      throw Error(ErrorKind::Config, "render kernel parameters must be strictly positive");
  }
};

// Width of the Gaussian used to resample Doppler features onto grid bins.
inline constexpr double kFeatureSigmaBins = 1.0;

// Chirp beat response: exp(j 2 pi f0 tau), f0 = 2 S r / c, tau = 2 r / c.
inline std::complex<double> signal_modulation(const RadarParams& rp, const Vec3& p) {
  const double r = p.norm();
  if (!(r > 0.0)) throw Error(ErrorKind::Domain, "signal modulation undefined at the origin");
  const double slope = rp.chirp_slope();
  const double phase = 8.0 * kPi * slope * r * r / (kSpeedOfLight * kSpeedOfLight);
  return {std::cos(phase), std::sin(phase)};
}

// Doppler shift phase: exp(j 2 pi * 2 v_r / lambda).
inline std::complex<double> doppler_modulation(const RadarParams& rp, const Vec3& p,
                                               const Vec3& v) {
  const double v_r = radial_velocity(p, v);
  const double phase = 4.0 * kPi * v_r / rp.wavelength_m;
  return {std::cos(phase), std::sin(phase)};
}

// Antenna array phase for azimuth and elevation.
inline std::complex<double> antenna_phase(const RadarParams& rp, const Vec3& p) {
  const Spherical s = cartesian_to_spherical(p);
  const double phase = 2.0 * kPi *
                       (rp.antenna_spacing_az_m * std::sin(s.azimuth) +
                        rp.antenna_spacing_el_m * std::sin(s.elevation)) /
                       rp.wavelength_m;
  return {std::cos(phase), std::sin(phase)};
}

// Two-way propagation attenuation 1 / r^4.
inline double path_loss(const Vec3& p, double min_range_m = 0.1) {
  const double r = p.norm();
  if (!(r >= min_range_m))
    throw Error(ErrorKind::Domain, "path loss singularity guard: range below minimum");
  const double r2 = r * r;
  return 1.0 / (r2 * r2);
}

struct JointGradients {
  Vec3 position;
  Vec3 scale;
  std::array<double, 4> rotation{};
  Vec3 velocity;
  double opacity = 0.0;
  std::vector<double> doppler_features;
};

struct FrameGradients {
  std::vector<JointGradients> joints;
};

namespace detail {

// Everything the rasterizer needs about one joint, precomputed once.
struct JointRaster {
  double r = 0.0, az = 0.0, el = 0.0, v_r = 0.0;
  Vec3 u;            // radial unit vector
  Vec3 tan;          // azimuthal tangent (-sin az, cos az, 0)
  double amp = 0.0;  // opacity / r^4
  double psi = 0.0;  // total modulation phase
  double c_r = 0.0, c_v = 0.0, c_a = 0.0;        // continuous bin coords
  double sigma_r = 0.0, sigma_v = 0.0, sigma_a = 0.0;  // bins
  bool sr_floored = false, sa_floored = false;
  double s_rad = 0.0, s_tan = 0.0;  // covariance projections (m)
  Vec3 w_u, w_t;                    // body-frame projections R^T u, R^T tan
  Mat3 rot;                         // rotation of the normalized quaternion
  int k0 = 0, k1 = -1, m0 = 0, m1 = -1, n0 = 0, n1 = -1;
  bool empty = true;
};

inline void axis_window(double center, double sigma, double trunc, int bins, int& lo, int& hi) {
  lo = static_cast<int>(std::ceil(center - trunc * sigma));
  hi = static_cast<int>(std::floor(center + trunc * sigma));
  lo = std::max(lo, 0);
  hi = std::min(hi, bins - 1);
}

inline JointRaster prepare_joint(const GaussianJoint& j, std::size_t joint_index,
                                 const RadarParams& rp, const HeatmapGrid& grid,
                                 const RenderKernelParams& kp) {
  JointRaster st;
  const Vec3& p = j.position_m;
  st.r = p.norm();
  if (!(p.x > 0.0) || !(st.r >= kp.min_range_m) || st.r < grid.range_min_m ||
      st.r > grid.range_max())
    throw Error(ErrorKind::Render,
                "joint " + std::to_string(joint_index) + " outside range coverage");
  st.u = p / st.r;
  const double rho = std::sqrt(p.x * p.x + p.y * p.y);
  st.az = std::atan2(p.y, p.x);
  st.el = std::atan2(p.z, rho);
  if (st.az < grid.angle_min_rad || st.az > grid.angle_max())
    throw Error(ErrorKind::Render,
                "joint " + std::to_string(joint_index) + " outside angle coverage");
  st.tan = {-std::sin(st.az), std::cos(st.az), 0.0};
  st.v_r = j.velocity_mps.dot(st.u);

  const double r2 = st.r * st.r;
  st.amp = j.opacity / (r2 * r2);
  const double slope = rp.chirp_slope();
  const double psi_s = 8.0 * kPi * slope * r2 / (kSpeedOfLight * kSpeedOfLight);
  const double psi_d = 4.0 * kPi * st.v_r / rp.wavelength_m;
  const double psi_ph = 2.0 * kPi *
                        (rp.antenna_spacing_az_m * std::sin(st.az) +
                         rp.antenna_spacing_el_m * std::sin(st.el)) /
                        rp.wavelength_m;
  st.psi = psi_s + psi_d + psi_ph;

  st.c_r = grid.range_coord(st.r);
  st.c_v = grid.doppler_coord(st.v_r);
  st.c_a = grid.angle_coord(st.az);

  st.rot = j.rotation.to_rotation();
  st.w_u = st.rot.transpose_mul(st.u);
  st.w_t = st.rot.transpose_mul(st.tan);
  const Vec3& s = j.scale_m;
  if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0))
    throw Error(ErrorKind::Render, "joint " + std::to_string(joint_index) + " has non-positive scale");
  st.s_rad = std::sqrt(s.x * s.x * st.w_u.x * st.w_u.x + s.y * s.y * st.w_u.y * st.w_u.y +
                       s.z * s.z * st.w_u.z * st.w_u.z);
  st.s_tan = std::sqrt(s.x * s.x * st.w_t.x * st.w_t.x + s.y * s.y * st.w_t.y * st.w_t.y +
                       s.z * s.z * st.w_t.z * st.w_t.z);

  const double sr_raw = st.s_rad / grid.range_res_m;
  st.sr_floored = sr_raw <= kp.range_sigma_floor_bins;
  st.sigma_r = st.sr_floored ? kp.range_sigma_floor_bins : sr_raw;
  const double sa_raw = std::atan(st.s_tan / st.r) / grid.angle_res_rad;
  st.sa_floored = sa_raw <= kp.angle_sigma_floor_bins;
  st.sigma_a = st.sa_floored ? kp.angle_sigma_floor_bins : sa_raw;
  st.sigma_v = kp.doppler_sigma_floor_bins;

  axis_window(st.c_r, st.sigma_r, kp.truncation_sigmas, grid.range_bins, st.k0, st.k1);
  axis_window(st.c_v, st.sigma_v, kp.truncation_sigmas, grid.doppler_bins, st.m0, st.m1);
  axis_window(st.c_a, st.sigma_a, kp.truncation_sigmas, grid.angle_bins, st.n0, st.n1);
  st.empty = st.k0 > st.k1 || st.m0 > st.m1 || st.n0 > st.n1;
  return st;
}

inline double gauss_bin(double k, double center, double sigma) {
  const double d = (k - center) / sigma;
  return std::exp(-0.5 * d * d);
}

// Doppler feature envelope resampled so that feature bin N_d/2 lands on the
// joint's Doppler coordinate.
inline double feature_envelope(const std::vector<double>& phi, double m, double c_v) {
  const double qc = static_cast<double>(phi.size()) / 2.0;
  double acc = 0.0;
  for (std::size_t q = 0; q < phi.size(); ++q) {
    const double offset = m - c_v - (static_cast<double>(q) - qc);
    acc += phi[q] * std::exp(-0.5 * (offset / kFeatureSigmaBins) * (offset / kFeatureSigmaBins));
  }
  return acc;
}

}  // namespace detail

// Complex field of Eq.-style coherent accumulation over the grid. Joints are
// accumulated in index order so results are bit-reproducible.
inline std::vector<std::complex<double>> render_complex(const DiprFrame& frame,
                                                        const RadarParams& rp,
                                                        const HeatmapGrid& grid,
                                                        const RenderKernelParams& kp) {
  grid.validate();
  kp.validate();
  std::vector<std::complex<double>> field(grid.cells(), {0.0, 0.0});
  const std::size_t abins = static_cast<std::size_t>(grid.angle_bins);
  const std::size_t vbins = static_cast<std::size_t>(grid.doppler_bins);

  for (std::size_t ji = 0; ji < frame.joints.size(); ++ji) {
    const auto& j = frame.joints[ji];
    const auto st = detail::prepare_joint(j, ji, rp, grid, kp);
    if (st.empty || st.amp == 0.0) continue;
    const std::complex<double> eipsi =
        kp.coherent ? std::complex<double>{std::cos(st.psi), std::sin(st.psi)}
                    : std::complex<double>{1.0, 0.0};

    std::vector<double> phi_m(static_cast<std::size_t>(st.m1 - st.m0 + 1));
    std::vector<double> wv_m(phi_m.size());
    for (int m = st.m0; m <= st.m1; ++m) {
      phi_m[static_cast<std::size_t>(m - st.m0)] =
          detail::feature_envelope(j.doppler_features, m, st.c_v);
      wv_m[static_cast<std::size_t>(m - st.m0)] = detail::gauss_bin(m, st.c_v, st.sigma_v);
    }
    for (int k = st.k0; k <= st.k1; ++k) {
      const double wr = detail::gauss_bin(k, st.c_r, st.sigma_r);
      for (int m = st.m0; m <= st.m1; ++m) {
        const double dop = wv_m[static_cast<std::size_t>(m - st.m0)] *
                           phi_m[static_cast<std::size_t>(m - st.m0)];
        const std::size_t row = (static_cast<std::size_t>(k) * vbins + static_cast<std::size_t>(m)) * abins;
        for (int n = st.n0; n <= st.n1; ++n) {
          const double wa = detail::gauss_bin(n, st.c_a, st.sigma_a);
          field[row + static_cast<std::size_t>(n)] += st.amp * wr * dop * wa * eipsi;
        }
      }
    }
  }
  return field;
}

inline Heatmap render(const DiprFrame& frame, const RadarParams& rp, const HeatmapGrid& grid,
                      const RenderKernelParams& kp) {
  const auto field = render_complex(frame, rp, grid, kp);
  Heatmap h(grid);
  for (std::size_t i = 0; i < field.size(); ++i) h.values[i] = std::abs(field[i]);
  return h;
}

// Per-joint truncation windows and floor activations; lets callers detect
// when a perturbation crossed a non-smooth configuration boundary.
inline std::vector<std::array<int, 8>> render_side_info(const DiprFrame& frame,
                                                        const RadarParams& rp,
                                                        const HeatmapGrid& grid,
                                                        const RenderKernelParams& kp) {
  std::vector<std::array<int, 8>> info;
  info.reserve(frame.joints.size());
  for (std::size_t ji = 0; ji < frame.joints.size(); ++ji) {
    const auto st = detail::prepare_joint(frame.joints[ji], ji, rp, grid, kp);
    info.push_back({st.k0, st.k1, st.m0, st.m1, st.n0, st.n1, st.sr_floored ? 1 : 0,
                    st.sa_floored ? 1 : 0});
  }
  return info;
}

// Gradient of <adjoint, |field|> w.r.t. every continuous joint parameter,
// by reverse accumulation over the render computation. The gradient of |C|
// at C = 0 is taken as 0.
inline FrameGradients render_with_gradients(const DiprFrame& frame, const RadarParams& rp,
                                            const HeatmapGrid& grid, const RenderKernelParams& kp,
                                            std::span<const double> adjoint) {
  if (adjoint.size() != grid.cells())
    throw Error(ErrorKind::Shape, "adjoint size does not match grid");
  const auto field = render_complex(frame, rp, grid, kp);

  // Cotangent of the complex field: dF = Re(sum W * dC).
  std::vector<std::complex<double>> w_field(field.size(), {0.0, 0.0});
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double mag = std::abs(field[i]);
    if (mag > 0.0 && adjoint[i] != 0.0) w_field[i] = adjoint[i] * std::conj(field[i]) / mag;
  }

  const double slope = rp.chirp_slope();
  const std::size_t abins = static_cast<std::size_t>(grid.angle_bins);
  const std::size_t vbins = static_cast<std::size_t>(grid.doppler_bins);

  FrameGradients out;
  out.joints.resize(frame.joints.size());

  for (std::size_t ji = 0; ji < frame.joints.size(); ++ji) {
    const auto& j = frame.joints[ji];
    auto& g = out.joints[ji];
    g.doppler_features.assign(j.doppler_features.size(), 0.0);
    const auto st = detail::prepare_joint(j, ji, rp, grid, kp);
    if (st.empty) continue;
    const std::complex<double> eipsi =
        kp.coherent ? std::complex<double>{std::cos(st.psi), std::sin(st.psi)}
                    : std::complex<double>{1.0, 0.0};

    const int mw = st.m1 - st.m0 + 1;
    std::vector<double> phi_m(static_cast<std::size_t>(mw));
    std::vector<double> wv_m(static_cast<std::size_t>(mw));
    for (int m = st.m0; m <= st.m1; ++m) {
      phi_m[static_cast<std::size_t>(m - st.m0)] =
          detail::feature_envelope(j.doppler_features, m, st.c_v);
      wv_m[static_cast<std::size_t>(m - st.m0)] = detail::gauss_bin(m, st.c_v, st.sigma_v);
    }

    // Local adjoints of the rasterization factors.
    double g_amp = 0.0, g_psi = 0.0;
    double g_cr = 0.0, g_cv = 0.0, g_ca = 0.0, g_sr = 0.0, g_sa = 0.0;
    std::vector<std::complex<double>> s_m(static_cast<std::size_t>(mw), {0.0, 0.0});

    for (int k = st.k0; k <= st.k1; ++k) {
      const double wr = detail::gauss_bin(k, st.c_r, st.sigma_r);
      const double dk = static_cast<double>(k) - st.c_r;
      for (int m = st.m0; m <= st.m1; ++m) {
        const std::size_t mi = static_cast<std::size_t>(m - st.m0);
        const double wv = wv_m[mi];
        const double phim = phi_m[mi];
        const std::size_t row = (static_cast<std::size_t>(k) * vbins + static_cast<std::size_t>(m)) * abins;
        for (int n = st.n0; n <= st.n1; ++n) {
          const std::complex<double>& w = w_field[row + static_cast<std::size_t>(n)];
          if (w.real() == 0.0 && w.imag() == 0.0) continue;
          const double wa = detail::gauss_bin(n, st.c_a, st.sigma_a);
          const double dn = static_cast<double>(n) - st.c_a;
          // wp = W * e^{i psi} * wr * wv * wa  (no amplitude, no feature envelope)
          const std::complex<double> wp = w * eipsi * (wr * wv * wa);
          s_m[mi] += wp;
          const double re_we = wp.real() * st.amp * phim;
          g_cr += re_we * dk / (st.sigma_r * st.sigma_r);
          g_sr += re_we * dk * dk / (st.sigma_r * st.sigma_r * st.sigma_r);
          g_ca += re_we * dn / (st.sigma_a * st.sigma_a);
          g_sa += re_we * dn * dn / (st.sigma_a * st.sigma_a * st.sigma_a);
        }
      }
    }

    const double qc = static_cast<double>(j.doppler_features.size()) / 2.0;
    for (int m = st.m0; m <= st.m1; ++m) {
      const std::size_t mi = static_cast<std::size_t>(m - st.m0);
      const double re_s = s_m[mi].real();
      const double im_s = s_m[mi].imag();
      const double phim = phi_m[mi];
      g_amp += re_s * phim;
      if (kp.coherent) g_psi += -im_s * phim * st.amp;
      // Doppler-center path through both the bin kernel and the envelope.
      double dphi_dc = 0.0;
      for (std::size_t q = 0; q < j.doppler_features.size(); ++q) {
        const double off = static_cast<double>(m) - st.c_v - (static_cast<double>(q) - qc);
        const double gq = std::exp(-0.5 * (off / kFeatureSigmaBins) * (off / kFeatureSigmaBins));
        dphi_dc += j.doppler_features[q] * gq * off / (kFeatureSigmaBins * kFeatureSigmaBins);
        g.doppler_features[q] += re_s * st.amp * gq;
      }
      const double dvm = static_cast<double>(m) - st.c_v;
      g_cv += re_s * st.amp * (phim * dvm / (st.sigma_v * st.sigma_v) + dphi_dc);
    }

    // Chain through the per-joint scalars.
    const double r = st.r;
    const double lambda = rp.wavelength_m;
    double g_r = g_amp * (-4.0 * j.opacity / (r * r * r * r * r)) +
                 g_cr / grid.range_res_m;
    double g_vr = g_cv / grid.doppler_res_mps;
    double g_az = g_ca / grid.angle_res_rad;
    double g_el = 0.0;
    if (kp.coherent) {
      g_r += g_psi * (16.0 * kPi * slope * r / (kSpeedOfLight * kSpeedOfLight));
      g_vr += g_psi * (4.0 * kPi / lambda);
      g_az += g_psi * (2.0 * kPi * rp.antenna_spacing_az_m / lambda) * std::cos(st.az);
      g_el += g_psi * (2.0 * kPi * rp.antenna_spacing_el_m / lambda) * std::cos(st.el);
    }
    g.opacity = g_amp / (r * r * r * r);

    const Vec3& s = j.scale_m;
    Vec3 g_scale{};
    Vec3 y_u{}, y_t{};
    double g_srad = 0.0, g_stan = 0.0;
    if (!st.sr_floored && st.s_rad > 0.0) {
      g_srad = g_sr / grid.range_res_m;
      y_u = {s.x * s.x * st.w_u.x / st.s_rad, s.y * s.y * st.w_u.y / st.s_rad,
             s.z * s.z * st.w_u.z / st.s_rad};
      g_scale += Vec3{s.x * st.w_u.x * st.w_u.x, s.y * st.w_u.y * st.w_u.y,
                      s.z * st.w_u.z * st.w_u.z} *
                 (g_srad / st.s_rad);
    }
    if (!st.sa_floored && st.s_tan > 0.0) {
      const double ratio = st.s_tan / r;
      const double datan = 1.0 / (1.0 + ratio * ratio);
      g_stan = g_sa / grid.angle_res_rad * datan / r;
      g_r += g_sa / grid.angle_res_rad * datan * (-st.s_tan / (r * r));
      y_t = {s.x * s.x * st.w_t.x / st.s_tan, s.y * s.y * st.w_t.y / st.s_tan,
             s.z * s.z * st.w_t.z / st.s_tan};
      g_scale += Vec3{s.x * st.w_t.x * st.w_t.x, s.y * st.w_t.y * st.w_t.y,
                      s.z * st.w_t.z * st.w_t.z} *
                 (g_stan / st.s_tan);
      // tangent direction turns with azimuth
      const Vec3 dtan_daz{-std::cos(st.az), -std::sin(st.az), 0.0};
      g_az += g_stan * (st.rot * y_t).dot(dtan_daz);
    }
    g.scale = g_scale;

    // Quaternion gradient in the ambient 4-space of the internally
    // normalized quaternion.
    if (g_srad != 0.0 || g_stan != 0.0) {
      const Quat qn = j.rotation.normalized();
      const auto partials = rotation_partials_unit(qn);
      std::array<double, 4> g_qhat{};
      for (int c = 0; c < 4; ++c) {
        double acc = 0.0;
        if (g_srad != 0.0) acc += y_u.dot(partials[static_cast<std::size_t>(c)].transpose_mul(st.u)) * g_srad;
        if (g_stan != 0.0) acc += y_t.dot(partials[static_cast<std::size_t>(c)].transpose_mul(st.tan)) * g_stan;
        g_qhat[static_cast<std::size_t>(c)] = acc;
      }
      const double qnorm = j.rotation.norm();
      const std::array<double, 4> qh{qn.w, qn.x, qn.y, qn.z};
      double dotqg = 0.0;
      for (int c = 0; c < 4; ++c) dotqg += qh[static_cast<std::size_t>(c)] * g_qhat[static_cast<std::size_t>(c)];
      for (int c = 0; c < 4; ++c)
        g.rotation[static_cast<std::size_t>(c)] =
            (g_qhat[static_cast<std::size_t>(c)] - qh[static_cast<std::size_t>(c)] * dotqg) / qnorm;
    }

    // Assemble the position gradient.
    const double rho = std::sqrt(j.position_m.x * j.position_m.x + j.position_m.y * j.position_m.y);
    const Vec3 daz_dp{-j.position_m.y / (rho * rho), j.position_m.x / (rho * rho), 0.0};
    const Vec3 del_dp{-j.position_m.x * j.position_m.z / (rho * r * r),
                      -j.position_m.y * j.position_m.z / (rho * r * r), rho / (r * r)};
    const Vec3 dvr_dp = (j.velocity_mps - st.v_r * st.u) / r;
    Vec3 g_p = g_r * st.u + g_az * daz_dp + g_el * del_dp + g_vr * dvr_dp;
    if (g_srad != 0.0) {
      // s_rad depends on the radial direction: d u / d p = (I - u u^T) / r
      const Vec3 ry = st.rot * y_u;
      g_p += (ry - st.u * st.u.dot(ry)) * (g_srad / r);
    }
    g.position = g_p;
    g.velocity = g_vr * st.u;
  }
  return out;
}

}  // namespace mgs
