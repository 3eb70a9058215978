// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Planar square-marker pose recovery: normalized DLT homography, pose
// decomposition against camera intrinsics, and a per-entity jump-rejecting
// pose filter. Camera frame: x right, y down, z forward; image origin at the
// top-left, pixel units.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include <ms2/core.hpp>

namespace ms2 {

class DegenerateError : public Error {
public:
  explicit DegenerateError(const std::string& what) : Error(what) {}
};

class BehindCameraError : public Error {
public:
  explicit BehindCameraError(const std::string& what) : Error(what) {}
};

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;  // focal lengths, px
  double cx = 0.0, cy = 0.0;  // principal point, px
  std::uint32_t width = 0, height = 0;
  bool operator==(const CameraIntrinsics&) const = default;
};

inline void validate_camera(const CameraIntrinsics& cam) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
  if (cam.cx < 0.0 || cam.cx > cam.width || cam.cy < 0.0 || cam.cy > cam.height) {
    throw ValidationError("camera principal point must lie within image bounds");
  }
}

struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
  bool operator==(const ImagePoint&) const = default;
};

struct MarkerObservation {
  EntityId marker_id = 0;
  std::uint64_t timestamp_us = 0;
  // Counterclockwise in marker-plane coordinates, starting at (-s/2, -s/2).
  std::array<ImagePoint, 4> corners{};
  double edge = 0.0;  // marker edge length, m
  bool operator==(const MarkerObservation&) const = default;
};

struct ObjectPose {
  EntityId entity = 0;
  std::uint64_t timestamp_us = 0;
  Transform pose{};  // marker frame -> camera frame
  double reprojection_error = 0.0;  // RMS, px
  bool valid = false;
  bool operator==(const ObjectPose&) const = default;
};

inline void validate_observation(const MarkerObservation& obs, const CameraIntrinsics& cam) {
  if (!(obs.edge > 0.0)) throw ValidationError("marker edge length must be positive");
  for (const ImagePoint& c : obs.corners) {
    if (!std::isfinite(c.u) || !std::isfinite(c.v)) {
      throw ValidationError("marker corner has non-finite coordinate");
    }
    if (c.u < 0.0 || c.u > cam.width || c.v < 0.0 || c.v > cam.height) {
      throw ValidationError("marker corner outside image bounds");
    }
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      for (int c = b + 1; c < 4; ++c) {
        const double area = (obs.corners[b].u - obs.corners[a].u) * (obs.corners[c].v - obs.corners[a].v) -
                            (obs.corners[b].v - obs.corners[a].v) * (obs.corners[c].u - obs.corners[a].u);
        if (std::abs(area) < 1e-6) throw ValidationError("three marker corners are collinear");
      }
    }
  }
}

// One plane-point to pixel correspondence for homography estimation.
struct Correspondence {
  double plane_x = 0.0;
  double plane_y = 0.0;
  double u = 0.0;
  double v = 0.0;
};

namespace detail {

struct NormalizeResult {
  Eigen::Matrix3d transform;
  std::vector<Eigen::Vector2d> points;
};

inline NormalizeResult hartley_normalize(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (mean_dist < 1e-12) throw DegenerateError("all correspondence points coincide");
  const double s = std::sqrt(2.0) / mean_dist;

  NormalizeResult r;
  r.transform << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  r.points.reserve(pts.size());
  for (const auto& p : pts) r.points.emplace_back(s * (p - centroid));
  return r;
}

}  // namespace detail

// Direct linear transform with Hartley normalization. The result has unit
// Frobenius norm and a non-negative bottom-right entry.
inline Eigen::Matrix3d estimate_homography(const std::vector<Correspondence>& pairs) {
  if (pairs.size() < 4) throw DegenerateError("homography needs at least 4 correspondences");

  std::vector<Eigen::Vector2d> plane, pixel;
  plane.reserve(pairs.size());
  pixel.reserve(pairs.size());
  for (const Correspondence& c : pairs) {
    plane.emplace_back(c.plane_x, c.plane_y);
    pixel.emplace_back(c.u, c.v);
  }
  const auto np = detail::hartley_normalize(plane);
  const auto nx = detail::hartley_normalize(pixel);

  Eigen::MatrixXd a(2 * pairs.size(), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double X = np.points[i].x(), Y = np.points[i].y();
    const double u = nx.points[i].x(), v = nx.points[i].y();
    a.row(2 * i) << -X, -Y, -1, 0, 0, 0, u * X, u * Y, u;
    a.row(2 * i + 1) << 0, 0, 0, -X, -Y, -1, v * X, v * Y, v;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sigma = svd.singularValues();
  if (sigma(7) < 1e-10 * sigma(0)) {
    throw DegenerateError("correspondences are rank-deficient (collinear points)");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Eigen::Matrix3d result = nx.transform.inverse() * hn * np.transform;
  result /= result.norm();
  if (result(2, 2) < 0.0) result = -result;
  return result;
}

// Canonical marker corners, counterclockwise from (-s/2, -s/2).
inline std::array<Vec3, 4> marker_corners(double edge) {
  const double h = edge / 2.0;
  return {{{-h, -h, 0.0}, {h, -h, 0.0}, {h, h, 0.0}, {-h, h, 0.0}}};
}

// Pinhole projection of the marker's 4 corners under `pose`.
inline std::array<ImagePoint, 4> project_marker(const Transform& pose, double edge,
                                                const CameraIntrinsics& cam) {
  std::array<ImagePoint, 4> out{};
  const auto corners = marker_corners(edge);
  for (int i = 0; i < 4; ++i) {
    const Vec3 p = pose.rotation.rotate(corners[i]) + pose.position;
    if (p.z <= 0.0) throw BehindCameraError("marker corner at or behind the camera plane");
    out[i] = {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
  }
  return out;
}

inline constexpr double kReprojectionValidPx = 3.0;

// Recovers the marker pose in the camera frame from one observation.
inline ObjectPose pose_from_marker(const MarkerObservation& obs, const CameraIntrinsics& cam) {
  const auto corners = marker_corners(obs.edge);
  std::vector<Correspondence> pairs;
  pairs.reserve(4);
  for (int i = 0; i < 4; ++i) {
    pairs.push_back({corners[i].x, corners[i].y, obs.corners[i].u, obs.corners[i].v});
  }
  const Eigen::Matrix3d h = estimate_homography(pairs);

  Eigen::Matrix3d kinv;
  kinv << 1.0 / cam.fx, 0, -cam.cx / cam.fx, 0, 1.0 / cam.fy, -cam.cy / cam.fy, 0, 0, 1;
  Eigen::Matrix3d m = kinv * h;

  const double lambda = 2.0 / (m.col(0).norm() + m.col(1).norm());
  Eigen::Vector3d r1 = lambda * m.col(0);
  Eigen::Vector3d r2 = lambda * m.col(1);
  Eigen::Vector3d t = lambda * m.col(2);
  if (t.z() < 0.0) {
    // H is recovered only up to sign; pick the solution in front of the
    // camera before building the third axis so det stays +1.
    r1 = -r1;
    r2 = -r2;
    t = -t;
  }
  Eigen::Matrix3d q;
  q.col(0) = r1;
  q.col(1) = r2;
  q.col(2) = r1.cross(r2);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(q, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
    fix(2, 2) = -1.0;
    r = svd.matrixU() * fix * svd.matrixV().transpose();
  }

  const Eigen::Quaterniond eq(r);
  ObjectPose out;
  out.entity = obs.marker_id;
  out.timestamp_us = obs.timestamp_us;
  out.pose.rotation = UnitQuat{eq.w(), eq.x(), eq.y(), eq.z()}.normalized();
  out.pose.position = {t.x(), t.y(), t.z()};

  double sum2 = 0.0;
  const auto reproj = project_marker(out.pose, obs.edge, cam);
  for (int i = 0; i < 4; ++i) {
    const double du = reproj[i].u - obs.corners[i].u;
    const double dv = reproj[i].v - obs.corners[i].v;
    sum2 += du * du + dv * dv;
  }
  out.reprojection_error = std::sqrt(sum2 / 4.0);
  out.valid = out.reprojection_error <= kReprojectionValidPx && out.pose.position.z > 0.0;
  return out;
}

inline constexpr double kTrackMaxJumpMeters = 0.5;
inline constexpr double kTrackMaxJumpRadians = 60.0 * M_PI / 180.0;
inline constexpr double kTrackBlendAlpha = 0.6;

// Per-entity pose filter state.
struct TrackerState {
  bool has_history = false;
  Transform last_accepted{};  // raw pose of the last accepted observation
  ObjectPose last_emitted{};
};

// Jump-rejecting exponential filter. Rejected updates hold the previous
// output and mark it invalid; accepted updates blend toward the incoming
// pose, which keeps every emitted step no larger than the incoming one.
inline ObjectPose track_update(TrackerState& state, const ObjectPose& incoming) {
  if (!state.has_history) {
    if (incoming.valid) {
      state.has_history = true;
      state.last_accepted = incoming.pose;
      state.last_emitted = incoming;
    }
    return incoming;
  }

  const double jump = (incoming.pose.position - state.last_accepted.position).norm();
  const double twist = quat_angle(incoming.pose.rotation, state.last_accepted.rotation);
  if (!incoming.valid || jump > kTrackMaxJumpMeters || twist > kTrackMaxJumpRadians) {
    ObjectPose held = state.last_emitted;
    held.timestamp_us = incoming.timestamp_us;
    held.valid = false;
    return held;
  }

  state.last_accepted = incoming.pose;
  ObjectPose out = incoming;
  out.pose.position =
      lerp(state.last_emitted.pose.position, incoming.pose.position, kTrackBlendAlpha);
  out.pose.rotation =
      nlerp(state.last_emitted.pose.rotation, incoming.pose.rotation, kTrackBlendAlpha);
  state.last_emitted = out;
  return out;
}

}  // namespace ms2
