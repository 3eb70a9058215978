// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Skeleton retargeting: 25-joint position frames from a body tracker are
// converted to bone orientations on an avatar rig. Orientations carry zero
// twist about the bone axis; position data cannot determine twist.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <ms2/core.hpp>

namespace ms2 {

inline constexpr std::size_t kJointCount = 25;

// Canonical joint indices (standard 25-joint body-tracking layout).
enum Joint : std::uint8_t {
  kSpineBase = 0,
  kSpineMid = 1,
  kNeck = 2,
  kHead = 3,
  kShoulderLeft = 4,
  kElbowLeft = 5,
  kWristLeft = 6,
  kHandLeft = 7,
  kShoulderRight = 8,
  kElbowRight = 9,
  kWristRight = 10,
  kHandRight = 11,
  kHipLeft = 12,
  kKneeLeft = 13,
  kAnkleLeft = 14,
  kFootLeft = 15,
  kHipRight = 16,
  kKneeRight = 17,
  kAnkleRight = 18,
  kFootRight = 19,
  kSpineShoulder = 20,
  kHandTipLeft = 21,
  kThumbLeft = 22,
  kHandTipRight = 23,
  kThumbRight = 24,
};

enum class JointConfidence : std::uint8_t {
  Tracked = 0,
  Inferred = 1,
  NotTracked = 2,
};

struct JointSample {
  Vec3 position{};
  JointConfidence confidence = JointConfidence::Tracked;
  bool operator==(const JointSample&) const = default;
};

struct SkeletonFrame {
  UserId user = 0;
  std::uint64_t timestamp_us = 0;
  std::vector<JointSample> joints;  // exactly kJointCount entries when valid
  bool operator==(const SkeletonFrame&) const = default;
};

struct Bone {
  std::string name;
  int parent_index = -1;  // -1 for a root bone
  std::uint8_t proximal_joint = 0;
  std::uint8_t distal_joint = 0;
  Vec3 rest_direction{0, 1, 0};
  double rest_length = 0.0;
  bool operator==(const Bone&) const = default;
};

struct RigDefinition {
  std::vector<Bone> bones;
  // Optional 25-entry rest pose. When present, joints no bone reaches keep
  // their rest offset from the nearest covered ancestor in forward
  // kinematics; when absent they coincide with that ancestor.
  std::vector<Vec3> rest_joints;
  bool operator==(const RigDefinition&) const = default;
};

struct BoneOrientationSet {
  UserId user = 0;
  std::uint64_t timestamp_us = 0;
  Vec3 root_position{};
  std::vector<UnitQuat> local_rotations;
  bool operator==(const BoneOrientationSet&) const = default;
};

class BadFrameError : public Error {
public:
  explicit BadFrameError(const std::string& what) : Error(what) {}
};

inline void validate_rig(const RigDefinition& rig) {
  for (std::size_t i = 0; i < rig.bones.size(); ++i) {
    const Bone& b = rig.bones[i];
    if (b.parent_index >= static_cast<int>(i)) {
      throw ValidationError("rig bones must be listed parent before child");
    }
    if (b.parent_index < -1) throw ValidationError("rig bone parent index out of range");
    if (b.proximal_joint >= kJointCount || b.distal_joint >= kJointCount) {
      throw ValidationError("rig bone joint index out of range");
    }
    if (!(b.rest_length > 0.0)) throw ValidationError("rig bone rest_length must be positive");
    if (std::abs(b.rest_direction.norm() - 1.0) > 1e-6) {
      throw ValidationError("rig bone rest_direction must be unit length");
    }
  }
  if (!rig.rest_joints.empty() && rig.rest_joints.size() != kJointCount) {
    throw ValidationError("rig rest_joints must have exactly 25 entries when present");
  }
}

inline constexpr double kBoneLengthTolerance = 0.20;
inline constexpr double kDegenerateBoneLength = 1e-4;

// Per-bone reliability flags for one frame against one rig.
struct FrameCheck {
  std::vector<bool> bone_unreliable;
};

inline FrameCheck validate_frame(const SkeletonFrame& frame, const RigDefinition& rig) {
  if (frame.joints.size() != kJointCount) {
    throw BadFrameError("skeleton frame must have exactly 25 joints, got " +
                        std::to_string(frame.joints.size()));
  }
  for (const JointSample& j : frame.joints) {
    if (!j.position.finite()) throw BadFrameError("skeleton frame has non-finite joint coordinate");
  }
  FrameCheck check;
  check.bone_unreliable.resize(rig.bones.size(), false);
  for (std::size_t i = 0; i < rig.bones.size(); ++i) {
    const Bone& b = rig.bones[i];
    const JointSample& p = frame.joints[b.proximal_joint];
    const JointSample& d = frame.joints[b.distal_joint];
    if (p.confidence == JointConfidence::NotTracked || d.confidence == JointConfidence::NotTracked) {
      check.bone_unreliable[i] = true;
      continue;
    }
    const double len = (d.position - p.position).norm();
    if (std::abs(len - b.rest_length) > kBoneLengthTolerance * b.rest_length) {
      check.bone_unreliable[i] = true;
    }
  }
  return check;
}

// Maps one frame onto the rig. Unreliable or degenerate bones reuse the
// previous pose's local rotation (identity when there is none).
inline BoneOrientationSet retarget_frame(const SkeletonFrame& frame, const RigDefinition& rig,
                                         const BoneOrientationSet* previous = nullptr) {
  const FrameCheck check = validate_frame(frame, rig);

  BoneOrientationSet out;
  out.user = frame.user;
  out.timestamp_us = frame.timestamp_us;
  out.root_position = frame.joints[kSpineBase].position;
  out.local_rotations.resize(rig.bones.size());

  std::vector<UnitQuat> global(rig.bones.size());
  for (std::size_t i = 0; i < rig.bones.size(); ++i) {
    const Bone& b = rig.bones[i];
    const UnitQuat parent_global = b.parent_index < 0 ? UnitQuat{} : global[b.parent_index];

    const Vec3 delta = frame.joints[b.distal_joint].position - frame.joints[b.proximal_joint].position;
    UnitQuat local;
    if (check.bone_unreliable[i] || delta.norm() < kDegenerateBoneLength) {
      local = previous ? previous->local_rotations[i] : UnitQuat{};
    } else {
      const UnitQuat bone_global = shortest_arc(b.rest_direction, delta.normalized());
      local = (parent_global.conjugate() * bone_global).normalized();
    }
    out.local_rotations[i] = local;
    global[i] = (parent_global * local).normalized();
  }
  return out;
}

// Reconstructs the 25 joint positions for a pose. Joints not covered by any
// bone keep their rest offset from the nearest covered ancestor (zero offset
// when the rig carries no rest pose).
inline std::array<Vec3, kJointCount> forward_kinematics(const RigDefinition& rig,
                                                        const BoneOrientationSet& pose) {
  std::array<Vec3, kJointCount> joints{};
  std::array<bool, kJointCount> placed{};
  std::array<int, kJointCount> placed_by{};  // bone index whose chain placed the joint
  placed_by.fill(-1);

  std::vector<UnitQuat> global(rig.bones.size());
  for (std::size_t i = 0; i < rig.bones.size(); ++i) {
    const Bone& b = rig.bones[i];
    const UnitQuat parent_global = b.parent_index < 0 ? UnitQuat{} : global[b.parent_index];
    global[i] = (parent_global * pose.local_rotations[i]).normalized();

    if (!placed[b.proximal_joint]) {
      // A chain root: anchor at the pose root.
      joints[b.proximal_joint] = pose.root_position;
      placed[b.proximal_joint] = true;
      placed_by[b.proximal_joint] = b.parent_index;
    }
    joints[b.distal_joint] =
        joints[b.proximal_joint] + global[i].rotate(b.rest_direction) * b.rest_length;
    placed[b.distal_joint] = true;
    placed_by[b.distal_joint] = static_cast<int>(i);
  }

  if (!rig.rest_joints.empty()) {
    // Uncovered joints ride along with the nearest covered ancestor bone's
    // distal joint, keeping their rest offset rotated by that bone.
    for (std::size_t j = 0; j < kJointCount; ++j) {
      if (placed[j]) continue;
      // Find the covered joint with the smallest rest-pose distance.
      int best = -1;
      double best_d = 0.0;
      for (std::size_t k = 0; k < kJointCount; ++k) {
        if (!placed[k]) continue;
        const double d = (rig.rest_joints[j] - rig.rest_joints[k]).norm();
        if (best < 0 || d < best_d) {
          best = static_cast<int>(k);
          best_d = d;
        }
      }
      if (best < 0) continue;
      const int bone = placed_by[best];
      const UnitQuat rot = bone < 0 ? UnitQuat{} : global[bone];
      joints[j] = joints[best] + rot.rotate(rig.rest_joints[j] - rig.rest_joints[best]);
      placed[j] = true;
    }
  } else {
    for (std::size_t j = 0; j < kJointCount; ++j) {
      if (!placed[j]) joints[j] = pose.root_position;
    }
  }
  return joints;
}

// Exponential blend of `current` toward `incoming` with weight alpha.
inline BoneOrientationSet smooth_pose(const BoneOrientationSet& current,
                                      const BoneOrientationSet& incoming, double alpha) {
  if (alpha >= 1.0) return incoming;
  BoneOrientationSet out;
  out.user = incoming.user;
  out.timestamp_us = incoming.timestamp_us;
  out.root_position = lerp(current.root_position, incoming.root_position, alpha);
  out.local_rotations.resize(incoming.local_rotations.size());
  for (std::size_t i = 0; i < incoming.local_rotations.size(); ++i) {
    out.local_rotations[i] = nlerp(current.local_rotations[i], incoming.local_rotations[i], alpha);
  }
  return out;
}

// Canonical rest pose for the 25-joint layout: a T-pose facing +Z with the
// pelvis 0.95 m above the ground. Shipping a code-level default keeps tools
// and tests free of a mandatory rig file.
inline const std::array<Vec3, kJointCount>& canonical_rest_joints() {
  static const std::array<Vec3, kJointCount> joints = {{
      {0.00, 0.95, 0.00},   // SpineBase
      {0.00, 1.20, 0.00},   // SpineMid
      {0.00, 1.52, 0.00},   // Neck
      {0.00, 1.65, 0.00},   // Head
      {-0.20, 1.45, 0.00},  // ShoulderLeft
      {-0.45, 1.45, 0.00},  // ElbowLeft
      {-0.70, 1.45, 0.00},  // WristLeft
      {-0.78, 1.45, 0.00},  // HandLeft
      {0.20, 1.45, 0.00},   // ShoulderRight
      {0.45, 1.45, 0.00},   // ElbowRight
      {0.70, 1.45, 0.00},   // WristRight
      {0.78, 1.45, 0.00},   // HandRight
      {-0.10, 0.90, 0.00},  // HipLeft
      {-0.10, 0.50, 0.00},  // KneeLeft
      {-0.10, 0.10, 0.00},  // AnkleLeft
      {-0.10, 0.05, 0.12},  // FootLeft
      {0.10, 0.90, 0.00},   // HipRight
      {0.10, 0.50, 0.00},   // KneeRight
      {0.10, 0.10, 0.00},   // AnkleRight
      {0.10, 0.05, 0.12},   // FootRight
      {0.00, 1.45, 0.00},   // SpineShoulder
      {-0.86, 1.45, 0.00},  // HandTipLeft
      {-0.73, 1.45, 0.05},  // ThumbLeft
      {0.86, 1.45, 0.00},   // HandTipRight
      {0.73, 1.45, 0.05},   // ThumbRight
  }};
  return joints;
}

// Edges of the canonical rig, parent joint before child, spanning all 25
// joints from the spine base.
inline const std::array<std::pair<std::uint8_t, std::uint8_t>, 24>& canonical_bone_edges() {
  static const std::array<std::pair<std::uint8_t, std::uint8_t>, 24> edges = {{
      {kSpineBase, kSpineMid},
      {kSpineMid, kSpineShoulder},
      {kSpineShoulder, kNeck},
      {kNeck, kHead},
      {kSpineShoulder, kShoulderLeft},
      {kShoulderLeft, kElbowLeft},
      {kElbowLeft, kWristLeft},
      {kWristLeft, kHandLeft},
      {kHandLeft, kHandTipLeft},
      {kWristLeft, kThumbLeft},
      {kSpineShoulder, kShoulderRight},
      {kShoulderRight, kElbowRight},
      {kElbowRight, kWristRight},
      {kWristRight, kHandRight},
      {kHandRight, kHandTipRight},
      {kWristRight, kThumbRight},
      {kSpineBase, kHipLeft},
      {kHipLeft, kKneeLeft},
      {kKneeLeft, kAnkleLeft},
      {kAnkleLeft, kFootLeft},
      {kSpineBase, kHipRight},
      {kHipRight, kKneeRight},
      {kKneeRight, kAnkleRight},
      {kAnkleRight, kFootRight},
  }};
  return edges;
}

inline const char* joint_name(std::size_t index) {
  static const char* names[kJointCount] = {
      "SpineBase",  "SpineMid",   "Neck",          "Head",        "ShoulderLeft",
      "ElbowLeft",  "WristLeft",  "HandLeft",      "ShoulderRight", "ElbowRight",
      "WristRight", "HandRight",  "HipLeft",       "KneeLeft",    "AnkleLeft",
      "FootLeft",   "HipRight",   "KneeRight",     "AnkleRight",  "FootRight",
      "SpineShoulder", "HandTipLeft", "ThumbLeft", "HandTipRight", "ThumbRight"};
  return names[index];
}

// Full-body rig built from the canonical rest pose: 24 bones in topological
// order covering every joint.
inline RigDefinition canonical_rig() {
  const auto& rest = canonical_rest_joints();
  RigDefinition rig;
  rig.rest_joints.assign(rest.begin(), rest.end());
  std::array<int, kJointCount> bone_reaching{};  // maps distal joint -> bone index
  bone_reaching.fill(-1);
  for (const auto& [prox, dist] : canonical_bone_edges()) {
    Bone b;
    b.name = joint_name(dist);
    b.parent_index = bone_reaching[prox];
    b.proximal_joint = prox;
    b.distal_joint = dist;
    const Vec3 delta = rest[dist] - rest[prox];
    b.rest_length = delta.norm();
    b.rest_direction = delta.normalized();
    bone_reaching[dist] = static_cast<int>(rig.bones.size());
    rig.bones.push_back(std::move(b));
  }
  validate_rig(rig);
  return rig;
}

// The rest-pose frame for a rig that ships joint positions; confidence all
// Tracked.
inline SkeletonFrame rest_frame(const RigDefinition& rig, UserId user = 0,
                                std::uint64_t timestamp_us = 0) {
  if (rig.rest_joints.size() != kJointCount) {
    throw ValidationError("rig has no rest joints to build a rest frame from");
  }
  SkeletonFrame f;
  f.user = user;
  f.timestamp_us = timestamp_us;
  f.joints.resize(kJointCount);
  for (std::size_t j = 0; j < kJointCount; ++j) f.joints[j].position = rig.rest_joints[j];
  return f;
}

}  // namespace ms2
