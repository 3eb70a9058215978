// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Core geometric and identity primitives shared by every subsystem.
// Convention: right-handed coordinates, +Y up, meters.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ms2 {

using EntityId = std::uint32_t;
using UserId = std::uint32_t;
using Tick = std::uint32_t;   // server frame counter, never decreases
using Seq = std::uint32_t;    // wrapping sequence number, serial arithmetic

// Base for all typed errors thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ZeroVectorError : public Error {
public:
  explicit ZeroVectorError(const std::string& what) : Error(what) {}
};

class ParseError : public Error {
public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }

  Vec3 normalized() const {
    const double n = norm();
    if (n < 1e-8) {
      throw ZeroVectorError("cannot normalize vector with norm < 1e-8");
    }
    return {x / n, y / n, z / n};
  }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  bool operator==(const Vec3&) const = default;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline Vec3 lerp(const Vec3& a, const Vec3& b, double t) {
  return a + (b - a) * t;
}

// Unit quaternion. Canonical sign w >= 0 after every normalization so
// encode/decode round trips stay bit-comparable.
struct UnitQuat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static constexpr UnitQuat identity() { return {1.0, 0.0, 0.0, 0.0}; }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  UnitQuat normalized() const {
    const double n = norm();
    if (n < 1e-12) {
      throw ZeroVectorError("cannot normalize quaternion with norm < 1e-12");
    }
    UnitQuat q{w / n, x / n, y / n, z / n};
    if (q.w < 0.0) {
      q = {-q.w, -q.x, -q.y, -q.z};
    }
    return q;
  }

  UnitQuat conjugate() const { return {w, -x, -y, -z}; }

  // Hamilton product.
  UnitQuat operator*(const UnitQuat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  // Rotate a vector: q v q*.
  Vec3 rotate(const Vec3& v) const {
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
  }

  bool finite() const {
    return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  bool operator==(const UnitQuat&) const = default;
};

inline UnitQuat axis_angle(const Vec3& axis, double angle_rad) {
  const Vec3 a = axis.normalized();
  const double h = angle_rad * 0.5;
  const double s = std::sin(h);
  return UnitQuat{std::cos(h), a.x * s, a.y * s, a.z * s}.normalized();
}

// Angle of the rotation taking a to b, in [0, pi].
inline double quat_angle(const UnitQuat& a, const UnitQuat& b) {
  const double d = std::abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z);
  return 2.0 * std::acos(std::min(1.0, d));
}

// Normalized linear blend, sign-corrected to the nearer hemisphere.
// t = 1 returns `to` unchanged so blending has an exact fixed point.
inline UnitQuat nlerp(const UnitQuat& from, const UnitQuat& to, double t) {
  if (t >= 1.0) {
    return to;
  }
  const double d = from.w * to.w + from.x * to.x + from.y * to.y + from.z * to.z;
  const double s = d < 0.0 ? -1.0 : 1.0;
  UnitQuat r{from.w + (s * to.w - from.w) * t, from.x + (s * to.x - from.x) * t,
             from.y + (s * to.y - from.y) * t, from.z + (s * to.z - from.z) * t};
  if (r == from) return from;  // exact fixed point when the blend is a no-op
  return r.normalized();
}

// Rigid pose: position in meters plus unit rotation.
struct Transform {
  Vec3 position{};
  UnitQuat rotation = UnitQuat::identity();

  static constexpr Transform identity() { return {}; }

  bool operator==(const Transform&) const = default;
};

// Applies b first, then a.
inline Transform transform_compose(const Transform& a, const Transform& b) {
  return {a.rotation.rotate(b.position) + a.position, (a.rotation * b.rotation).normalized()};
}

inline Transform transform_inverse(const Transform& t) {
  const UnitQuat inv = t.rotation.conjugate().normalized();
  return {inv.rotate(-t.position), inv};
}

// Minimal-angle rotation taking `from` onto `to`. Antiparallel inputs use a
// deterministic 180-degree fallback axis.
inline UnitQuat shortest_arc(const Vec3& from, const Vec3& to) {
  if (from.norm() < 1e-8 || to.norm() < 1e-8) {
    throw ZeroVectorError("shortest_arc input has norm < 1e-8");
  }
  const Vec3 f = from.normalized();
  const Vec3 t = to.normalized();
  const Vec3 sum = f + t;
  if (sum.norm() < 1e-7) {
    // Antiparallel: pick the fallback axis by the branch-stable rule.
    const Vec3 ref = std::abs(f.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 axis = f.cross(ref).normalized();
    return UnitQuat{0.0, axis.x, axis.y, axis.z}.normalized();
  }
  const Vec3 h = sum.normalized();
  const Vec3 c = f.cross(h);
  return UnitQuat{f.dot(h), c.x, c.y, c.z}.normalized();
}

}  // namespace ms2
