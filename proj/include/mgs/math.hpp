#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "mgs/error.hpp"

namespace mgs {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3 operator-() const { return {-x, -y, -z}; }
  bool operator==(const Vec3& o) const = default;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Mat3 {
  // row-major
  std::array<double, 9> a{};

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r * 3 + c)]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r * 3 + c)]; }

  static Mat3 identity() {
    Mat3 m;
    m(0, 0) = m(1, 1) = m(2, 2) = 1.0;
    return m;
  }

  Vec3 operator*(const Vec3& v) const {
    return {a[0] * v.x + a[1] * v.y + a[2] * v.z,
            a[3] * v.x + a[4] * v.y + a[5] * v.z,
            a[6] * v.x + a[7] * v.y + a[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  Vec3 transpose_mul(const Vec3& v) const {
    return {a[0] * v.x + a[3] * v.y + a[6] * v.z,
            a[1] * v.x + a[4] * v.y + a[7] * v.z,
            a[2] * v.x + a[5] * v.y + a[8] * v.z};
  }
  double det() const {
    return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
  }
};

// Unit quaternion (w, x, y, z).
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  bool operator==(const Quat& o) const = default;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    if (!(n > 0.0)) throw Error(ErrorKind::Domain, "cannot normalize zero quaternion");
    return {w / n, x / n, y / n, z / n};
  }

  // Rotation matrix of the normalized quaternion.
  Mat3 to_rotation() const {
    const Quat q = normalized();
    Mat3 m;
    const double ww = q.w, xx = q.x, yy = q.y, zz = q.z;
    m(0, 0) = 1.0 - 2.0 * (yy * yy + zz * zz);
    m(0, 1) = 2.0 * (xx * yy - ww * zz);
    m(0, 2) = 2.0 * (xx * zz + ww * yy);
    m(1, 0) = 2.0 * (xx * yy + ww * zz);
    m(1, 1) = 1.0 - 2.0 * (xx * xx + zz * zz);
    m(1, 2) = 2.0 * (yy * zz - ww * xx);
    m(2, 0) = 2.0 * (xx * zz - ww * yy);
    m(2, 1) = 2.0 * (yy * zz + ww * xx);
    m(2, 2) = 1.0 - 2.0 * (xx * xx + yy * yy);
    return m;
  }

  static Quat from_axis_angle(const Vec3& axis, double angle_rad) {
    const double n = axis.norm();
    if (!(n > 0.0)) throw Error(ErrorKind::Domain, "zero rotation axis");
    const double h = 0.5 * angle_rad;
    const double s = std::sin(h) / n;
    return {std::cos(h), axis.x * s, axis.y * s, axis.z * s};
  }
};

// Partial derivatives of the rotation matrix w.r.t. the (already unit)
// quaternion components, index order w, x, y, z.
inline std::array<Mat3, 4> rotation_partials_unit(const Quat& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  std::array<Mat3, 4> d;
  d[0].a = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
  d[1].a = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
  d[2].a = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
  d[3].a = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
  return d;
}

// Jacobi eigenvalue iteration for small symmetric matrices. Fills `vecs`
// column-wise with eigenvectors matching `vals`. Dimension n <= 4.
template <int N>
inline void jacobi_eigen_sym(std::array<double, N * N> m, std::array<double, N>& vals,
                             std::array<double, N * N>& vecs) {
  auto at = [](std::array<double, N * N>& a, int r, int c) -> double& { return a[r * N + c]; };
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) vecs[i * N + j] = (i == j) ? 1.0 : 0.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < N; ++p)
      for (int q = p + 1; q < N; ++q) off += at(m, p, q) * at(m, p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < N; ++p) {
      for (int q = p + 1; q < N; ++q) {
        const double apq = at(m, p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (at(m, q, q) - at(m, p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < N; ++k) {
          const double mkp = at(m, k, p), mkq = at(m, k, q);
          at(m, k, p) = c * mkp - s * mkq;
          at(m, k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < N; ++k) {
          const double mpk = at(m, p, k), mqk = at(m, q, k);
          at(m, p, k) = c * mpk - s * mqk;
          at(m, q, k) = s * mpk + c * mqk;
        }
        for (int k = 0; k < N; ++k) {
          const double vkp = vecs[k * N + p], vkq = vecs[k * N + q];
          vecs[k * N + p] = c * vkp - s * vkq;
          vecs[k * N + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  for (int i = 0; i < N; ++i) vals[i] = at(m, i, i);
}

}  // namespace mgs
