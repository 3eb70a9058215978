// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the bundled demo data: rig, camera intrinsics, two skeleton
// captures, and the overhead marker observation log. The motion script walks
// user 1 to a pedestal, grabs the cube by its top-face marker, carries it
// across the room, and lowers it onto the second cube slowly enough to
// register as a stack; user 2 stands by, swaying in place.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <ms2/io.hpp>
#include <ms2/marker.hpp>
#include <ms2/retarget.hpp>

using namespace ms2;

namespace {

constexpr double kCaptureSeconds = 30.0;
constexpr double kSkeletonHz = 30.0;
constexpr double kObservationHz = 60.0;
constexpr double kMarkerEdge = 0.12;

// Right arm segment lengths from the canonical rig (collinear at rest).
constexpr double kUpperArm = 0.25;
constexpr double kElbowToHand = 0.33;  // forearm 0.25 + wrist-to-hand 0.08

double round_to(double v, double step) { return std::round(v / step) * step; }

Vec3 round_pos(const Vec3& v) {
  return {round_to(v.x, 1e-6), round_to(v.y, 1e-6), round_to(v.z, 1e-6)};
}

Vec3 lerp3(const Vec3& a, const Vec3& b, double s) { return a + (b - a) * s; }

// --- motion script, all times in seconds ---

Vec3 user1_body(double t) {
  if (t < 3.0) return {-1.2, 0.0, -1.5 + (1.85 / 3.0) * t};
  if (t < 6.0) return {-1.2, 0.0, 0.35};
  if (t < 12.0) return {-1.2 + 0.4 * (t - 6.0), 0.0, 0.35};
  if (t < 15.0) return {1.2, 0.0, 0.35};
  if (t < 18.0) return lerp3({1.2, 0.0, 0.35}, {0.0, 0.0, -1.0}, (t - 15.0) / 3.0);
  return {0.0, 0.0, -1.0};
}

// Top-face marker of the carried cube.
Vec3 marker_a(double t) {
  if (t < 5.0) return {-1.2, 1.2, 0.8};
  if (t < 6.0) return {-1.2, 1.2 + 0.35 * (t - 5.0), 0.8};
  if (t < 12.0) return {-1.2 + 0.4 * (t - 6.0), 1.55, 0.8};
  if (t < 13.25) return {1.2, 1.55 - 0.04 * (t - 12.0), 0.8};
  return {1.2, 1.5, 0.8};
}

Vec3 rest_right_hand(const Vec3& body) { return body + Vec3{0.78, 1.45, 0.0}; }

Vec3 user1_right_hand(double t) {
  if (t < 3.0) return rest_right_hand(user1_body(t));
  if (t < 4.0) return lerp3(rest_right_hand({-1.2, 0.0, 0.35}), marker_a(4.0), t - 3.0);
  if (t < 14.0) return marker_a(t);
  if (t < 15.0) return lerp3(marker_a(14.0), rest_right_hand({1.2, 0.0, 0.35}), t - 14.0);
  return rest_right_hand(user1_body(t));
}

// Two-segment arm solve: elbow at kUpperArm from the shoulder, hand exactly
// on target, wrist/tip/thumb rigid with the forearm. Bends downward.
void solve_right_arm(const RigDefinition& rig, std::vector<JointSample>& joints,
                     const Vec3& target) {
  const Vec3 sh = joints[kShoulderRight].position;
  const Vec3 to_target = target - sh;
  const double d = to_target.norm();
  if (d > kUpperArm + kElbowToHand + 1e-9) {
    std::fprintf(stderr, "arm target out of reach: d=%f\n", d);
    std::exit(2);
  }
  const Vec3 u = to_target * (1.0 / d);
  Vec3 n = Vec3{0, -1, 0} - u * (Vec3{0, -1, 0}.dot(u));
  n = n * (1.0 / n.norm());
  const double cos_a = std::clamp(
      (kUpperArm * kUpperArm + d * d - kElbowToHand * kElbowToHand) / (2.0 * kUpperArm * d),
      -1.0, 1.0);
  const double sin_a = std::sqrt(1.0 - cos_a * cos_a);
  const Vec3 elbow = sh + (u * cos_a + n * sin_a) * kUpperArm;
  const Vec3 dir = (target - elbow) * (1.0 / (target - elbow).norm());
  const Vec3 wrist = elbow + dir * 0.25;

  // The rest forearm runs along +x; carry the distal cluster with it.
  const UnitQuat fore = shortest_arc({1, 0, 0}, dir);
  const Vec3 wrist_rest = rig.rest_joints[kWristRight];
  joints[kElbowRight].position = elbow;
  joints[kWristRight].position = wrist;
  joints[kHandRight].position = wrist + fore.rotate(rig.rest_joints[kHandRight] - wrist_rest);
  joints[kHandTipRight].position =
      wrist + fore.rotate(rig.rest_joints[kHandTipRight] - wrist_rest);
  joints[kThumbRight].position =
      wrist + fore.rotate(rig.rest_joints[kThumbRight] - wrist_rest);
}

SkeletonFrame frame_at(const RigDefinition& rig, UserId user, double t, const Vec3& body,
                       const Vec3* right_hand) {
  SkeletonFrame f;
  f.user = user;
  f.timestamp_us = static_cast<std::uint64_t>(std::llround(t * 1e6));
  f.joints.resize(kJointCount);
  for (std::size_t j = 0; j < kJointCount; ++j) {
    f.joints[j].position = rig.rest_joints[j] + body;
    f.joints[j].confidence = JointConfidence::Tracked;
  }
  if (right_hand != nullptr) solve_right_arm(rig, f.joints, *right_hand);
  for (auto& j : f.joints) j.position = round_pos(j.position);
  return f;
}

MarkerObservation observe(std::uint32_t marker_id, double t, const Transform& world_pose,
                          const Transform& camera_pose, const CameraIntrinsics& cam) {
  const Transform in_camera = transform_compose(transform_inverse(camera_pose), world_pose);
  MarkerObservation obs;
  obs.marker_id = marker_id;
  obs.timestamp_us = static_cast<std::uint64_t>(std::llround(t * 1e6));
  obs.corners = project_marker(in_camera, kMarkerEdge, cam);
  for (auto& c : obs.corners) {
    c.u = round_to(c.u, 1e-4);
    c.v = round_to(c.v, 1e-4);
  }
  obs.edge = kMarkerEdge;
  return obs;
}

template <typename WriteFn>
void write_file(const std::filesystem::path& path, WriteFn fn) {
  std::ofstream out(path);
  if (!out) {
    std::fprintf(stderr, "cannot write %s\n", path.string().c_str());
    std::exit(2);
  }
  fn(out);
  std::printf("wrote %s\n", path.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regenerate the bundled demo capture data"};
  std::string out_dir = "assets";
  app.add_option("--out-dir", out_dir, "directory to write the data files into");
  CLI11_PARSE(app, argc, argv);

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  const RigDefinition rig = canonical_rig();
  write_file(dir / "rig.json", [&](std::ostream& o) { save_rig(o, rig); });

  CameraIntrinsics cam;
  cam.fx = 300.0;
  cam.fy = 300.0;
  cam.cx = 320.0;
  cam.cy = 240.0;
  cam.width = 640;
  cam.height = 480;
  write_file(dir / "camera.json", [&](std::ostream& o) { save_camera(o, cam); });

  const int skeleton_frames = static_cast<int>(kCaptureSeconds * kSkeletonHz);
  std::vector<SkeletonFrame> user1, user2;
  for (int i = 0; i < skeleton_frames; ++i) {
    const double t = i / kSkeletonHz;
    const Vec3 hand = user1_right_hand(t);
    user1.push_back(frame_at(rig, 1, t, user1_body(t), &hand));
    const Vec3 sway{0.01 * std::sin(2.0 * M_PI * 0.2 * t), 0.0, 0.0};
    user2.push_back(frame_at(rig, 2, t, Vec3{1.2, 0.0, -1.5} + sway, nullptr));
  }
  write_file(dir / "user1.capture.jsonl",
             [&](std::ostream& o) { save_skeleton_capture(o, user1); });
  write_file(dir / "user2.capture.jsonl",
             [&](std::ostream& o) { save_skeleton_capture(o, user2); });

  // Overhead camera: 3 m up, looking straight down, image x along world x.
  const Transform camera_pose{{0.0, 3.0, 0.8},
                              UnitQuat{std::sqrt(0.5), std::sqrt(0.5), 0.0, 0.0}};
  // Both markers face up: marker normal (+z in marker frame) to world +y.
  const UnitQuat face_up{std::sqrt(0.5), -std::sqrt(0.5), 0.0, 0.0};
  const Transform marker_b{{1.2, 1.2, 0.8}, face_up};

  const int observation_frames = static_cast<int>(kCaptureSeconds * kObservationHz);
  std::vector<MarkerObservation> observations;
  for (int i = 0; i < observation_frames; ++i) {
    const double t = i / kObservationHz;
    observations.push_back(observe(1, t, Transform{marker_a(t), face_up}, camera_pose, cam));
    observations.push_back(observe(2, t, marker_b, camera_pose, cam));
  }
  write_file(dir / "markers.obs.jsonl",
             [&](std::ostream& o) { save_observation_capture(o, observations); });

  return 0;
}
