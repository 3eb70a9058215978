// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Independent test oracles. Everything here recomputes expected values by a
// different route than the library (homogeneous 4x4 matrices, axis-angle
// construction, pinhole arithmetic) so the tests do not just check the
// implementation against itself.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

#include <ms2/core.hpp>

namespace oracle {

using Mat4 = std::array<std::array<double, 4>, 4>;

inline Mat4 mat4_identity() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat4 mat4_mul(const Mat4& a, const Mat4& b) {
  Mat4 r{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

// Rotation matrix from a unit quaternion (textbook expansion).
inline Mat4 mat4_from_transform(const ms2::Transform& t) {
  const auto& q = t.rotation;
  Mat4 m = mat4_identity();
  m[0][0] = 1 - 2 * (q.y * q.y + q.z * q.z);
  m[0][1] = 2 * (q.x * q.y - q.z * q.w);
  m[0][2] = 2 * (q.x * q.z + q.y * q.w);
  m[1][0] = 2 * (q.x * q.y + q.z * q.w);
  m[1][1] = 1 - 2 * (q.x * q.x + q.z * q.z);
  m[1][2] = 2 * (q.y * q.z - q.x * q.w);
  m[2][0] = 2 * (q.x * q.z - q.y * q.w);
  m[2][1] = 2 * (q.y * q.z + q.x * q.w);
  m[2][2] = 1 - 2 * (q.x * q.x + q.y * q.y);
  m[0][3] = t.position.x;
  m[1][3] = t.position.y;
  m[2][3] = t.position.z;
  return m;
}

// Rigid-transform inverse: R^T, -R^T t.
inline Mat4 mat4_rigid_inverse(const Mat4& m) {
  Mat4 r = mat4_identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = m[j][i];
  for (int i = 0; i < 3; ++i) {
    r[i][3] = -(r[i][0] * m[0][3] + r[i][1] * m[1][3] + r[i][2] * m[2][3]);
  }
  return r;
}

inline ms2::Vec3 mat4_apply(const Mat4& m, const ms2::Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z + m[0][3],
          m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z + m[1][3],
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z + m[2][3]};
}

// Max abs difference between two matrices' rotation+translation parts.
inline double mat4_dist(const Mat4& a, const Mat4& b) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) d = std::max(d, std::abs(a[i][j] - b[i][j]));
  return d;
}

// Axis-angle quaternion built directly from the definition.
inline ms2::UnitQuat quat_axis_angle(double ax, double ay, double az, double angle) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  const double s = std::sin(angle / 2) / n;
  ms2::UnitQuat q{std::cos(angle / 2), ax * s, ay * s, az * s};
  return q;
}

// --- comparison helpers ---

inline double quat_dist(const ms2::UnitQuat& a, const ms2::UnitQuat& b) {
  const double dm = std::sqrt((a.w - b.w) * (a.w - b.w) + (a.x - b.x) * (a.x - b.x) +
                              (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
  const double dp = std::sqrt((a.w + b.w) * (a.w + b.w) + (a.x + b.x) * (a.x + b.x) +
                              (a.y + b.y) * (a.y + b.y) + (a.z + b.z) * (a.z + b.z));
  return std::min(dm, dp);
}

inline double vec_dist(const ms2::Vec3& a, const ms2::Vec3& b) { return (a - b).norm(); }

inline bool transform_close(const ms2::Transform& a, const ms2::Transform& b, double tol) {
  return vec_dist(a.position, b.position) <= tol && quat_dist(a.rotation, b.rotation) <= tol;
}

// --- deterministic random generators ---

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) {
    const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Box-Muller; implemented here (not std::normal_distribution) so results
  // are identical on every standard library.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform(0.0, 1.0);
    while (u1 <= 0.0) u1 = uniform(0.0, 1.0);
    const double u2 = uniform(0.0, 1.0);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
  }

  ms2::Vec3 unit_vec() {
    // Rejection-sample inside the ball, then normalize.
    for (;;) {
      ms2::Vec3 v{uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
      const double n = v.norm();
      if (n > 1e-3 && n <= 1.0) return v * (1.0 / n);
    }
  }

  ms2::UnitQuat unit_quat() {
    const ms2::Vec3 a = unit_vec();
    return quat_axis_angle(a.x, a.y, a.z, uniform(0, 2 * M_PI)).normalized();
  }

  ms2::Vec3 vec(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }

  ms2::Transform transform(double pos_range = 5.0) {
    return {vec(-pos_range, pos_range), unit_quat()};
  }

  std::uint64_t u64() { return eng_(); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(eng_()); }

private:
  std::mt19937_64 eng_;
};

}  // namespace oracle
