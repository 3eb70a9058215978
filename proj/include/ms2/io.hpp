// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// File formats for the offline pipeline: rig definitions, skeleton and
// marker-observation captures, retarget/track outputs, and the session event
// log. Captures and logs are line-delimited records (one JSON object per
// line); the rest are single JSON documents.

#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <ms2/core.hpp>
#include <ms2/interaction.hpp>
#include <ms2/marker.hpp>
#include <ms2/retarget.hpp>

namespace ms2 {

namespace detail {

inline nlohmann::json parse_document(std::istream& source, const char* what) {
  try {
    return nlohmann::json::parse(source);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

inline nlohmann::json parse_line(const std::string& line, const char* what, std::size_t lineno) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(what) + " line " + std::to_string(lineno) +
                     " is not valid JSON: " + e.what());
  }
}

inline Vec3 vec3_from_array(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError("field '" + field + "' must be an array of 3 numbers");
  }
  const Vec3 v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!v.finite()) throw ValidationError("field '" + field + "' has non-finite component");
  return v;
}

inline UnitQuat quat_from_array(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 4) {
    throw ParseError("field '" + field + "' must be an array of 4 numbers [w,x,y,z]");
  }
  return UnitQuat{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline nlohmann::json vec3_to_array(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

inline nlohmann::json quat_to_array(const UnitQuat& q) {
  return nlohmann::json::array({q.w, q.x, q.y, q.z});
}

// Reads non-empty lines, handing each to `fn(json, lineno)`.
template <class Fn>
void for_each_record(std::istream& source, const char* what, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(source, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(parse_line(line, what, lineno), lineno);
  }
}

}  // namespace detail

// --- Rig ---
// {"bones": [{"name", "parent", "proximal", "distal", "rest_direction":[x,y,z],
//   "rest_length"}...], "rest_joints": [[x,y,z] x 25]?}

inline RigDefinition load_rig(std::istream& source) {
  const nlohmann::json doc = detail::parse_document(source, "rig document");
  if (!doc.is_object()) throw ParseError("rig document root must be an object");
  RigDefinition rig;
  try {
    for (const auto& jb : doc.at("bones")) {
      Bone b;
      b.name = jb.at("name").get<std::string>();
      b.parent_index = jb.at("parent").get<int>();
      const int proximal = jb.at("proximal").get<int>();
      const int distal = jb.at("distal").get<int>();
      if (proximal < 0 || proximal >= static_cast<int>(kJointCount) || distal < 0 ||
          distal >= static_cast<int>(kJointCount)) {
        throw ValidationError("bone '" + b.name + "' joint index out of range");
      }
      b.proximal_joint = static_cast<std::uint8_t>(proximal);
      b.distal_joint = static_cast<std::uint8_t>(distal);
      b.rest_direction = detail::vec3_from_array(jb.at("rest_direction"), "bones.rest_direction");
      b.rest_length = jb.at("rest_length").get<double>();
      rig.bones.push_back(std::move(b));
    }
    if (doc.contains("rest_joints")) {
      for (const auto& jj : doc.at("rest_joints")) {
        rig.rest_joints.push_back(detail::vec3_from_array(jj, "rest_joints"));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("rig document malformed: ") + e.what());
  }
  validate_rig(rig);
  return rig;
}

inline RigDefinition load_rig(const std::string& text) {
  std::istringstream in(text);
  return load_rig(in);
}

inline nlohmann::json rig_to_json(const RigDefinition& rig) {
  nlohmann::json bones = nlohmann::json::array();
  for (const Bone& b : rig.bones) {
    bones.push_back({{"name", b.name},
                     {"parent", b.parent_index},
                     {"proximal", b.proximal_joint},
                     {"distal", b.distal_joint},
                     {"rest_direction", detail::vec3_to_array(b.rest_direction)},
                     {"rest_length", b.rest_length}});
  }
  nlohmann::json doc{{"bones", std::move(bones)}};
  if (!rig.rest_joints.empty()) {
    nlohmann::json joints = nlohmann::json::array();
    for (const Vec3& p : rig.rest_joints) joints.push_back(detail::vec3_to_array(p));
    doc["rest_joints"] = std::move(joints);
  }
  return doc;
}

inline void save_rig(std::ostream& out, const RigDefinition& rig) {
  out << rig_to_json(rig).dump(2) << '\n';
}

// --- Skeleton captures ---
// One frame per line: {"user", "timestamp_us", "joints": [{"p":[x,y,z], "c":0|1|2} x 25]}

inline std::vector<SkeletonFrame> load_skeleton_capture(std::istream& source) {
  std::vector<SkeletonFrame> frames;
  detail::for_each_record(source, "skeleton capture", [&](const nlohmann::json& j, std::size_t lineno) {
    try {
      SkeletonFrame f;
      f.user = j.at("user").get<UserId>();
      f.timestamp_us = j.at("timestamp_us").get<std::uint64_t>();
      for (const auto& jj : j.at("joints")) {
        JointSample s;
        s.position = detail::vec3_from_array(jj.at("p"), "joints.p");
        const int c = jj.at("c").get<int>();
        if (c < 0 || c > 2) {
          throw ValidationError("skeleton capture line " + std::to_string(lineno) +
                                ": joint confidence must be 0, 1 or 2");
        }
        s.confidence = static_cast<JointConfidence>(c);
        f.joints.push_back(s);
      }
      if (f.joints.size() != kJointCount) {
        throw ValidationError("skeleton capture line " + std::to_string(lineno) + ": expected " +
                              std::to_string(kJointCount) + " joints, got " +
                              std::to_string(f.joints.size()));
      }
      frames.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("skeleton capture line " + std::to_string(lineno) + " malformed: " + e.what());
    }
  });
  return frames;
}

inline void save_skeleton_capture(std::ostream& out, const std::vector<SkeletonFrame>& frames) {
  for (const SkeletonFrame& f : frames) {
    nlohmann::json joints = nlohmann::json::array();
    for (const JointSample& s : f.joints) {
      joints.push_back({{"p", detail::vec3_to_array(s.position)},
                        {"c", static_cast<int>(s.confidence)}});
    }
    out << nlohmann::json{{"user", f.user},
                          {"timestamp_us", f.timestamp_us},
                          {"joints", std::move(joints)}}
               .dump()
        << '\n';
  }
}

// --- Marker observation captures ---
// One observation per line: {"marker_id", "timestamp_us", "corners":[[u,v] x 4], "edge_m"}

inline std::vector<MarkerObservation> load_observation_capture(std::istream& source) {
  std::vector<MarkerObservation> observations;
  detail::for_each_record(source, "observation capture", [&](const nlohmann::json& j, std::size_t lineno) {
    try {
      MarkerObservation obs;
      obs.marker_id = j.at("marker_id").get<EntityId>();
      obs.timestamp_us = j.at("timestamp_us").get<std::uint64_t>();
      const auto& corners = j.at("corners");
      if (!corners.is_array() || corners.size() != 4) {
        throw ParseError("observation capture line " + std::to_string(lineno) +
                         ": corners must be an array of 4 [u,v] pairs");
      }
      for (std::size_t i = 0; i < 4; ++i) {
        const auto& c = corners[i];
        if (!c.is_array() || c.size() != 2) {
          throw ParseError("observation capture line " + std::to_string(lineno) +
                           ": corners must be an array of 4 [u,v] pairs");
        }
        obs.corners[i] = ImagePoint{c[0].get<double>(), c[1].get<double>()};
      }
      obs.edge = j.at("edge_m").get<double>();
      if (!(obs.edge > 0.0)) {
        throw ValidationError("observation capture line " + std::to_string(lineno) +
                              ": edge_m must be positive");
      }
      observations.push_back(obs);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("observation capture line " + std::to_string(lineno) +
                       " malformed: " + e.what());
    }
  });
  return observations;
}

inline void save_observation_capture(std::ostream& out,
                                     const std::vector<MarkerObservation>& observations) {
  for (const MarkerObservation& obs : observations) {
    nlohmann::json corners = nlohmann::json::array();
    for (const ImagePoint& c : obs.corners) corners.push_back(nlohmann::json::array({c.u, c.v}));
    out << nlohmann::json{{"marker_id", obs.marker_id},
                          {"timestamp_us", obs.timestamp_us},
                          {"corners", std::move(corners)},
                          {"edge_m", obs.edge}}
               .dump()
        << '\n';
  }
}

// --- Camera intrinsics ---
// {"fx", "fy", "cx", "cy", "width", "height"}

inline CameraIntrinsics load_camera(std::istream& source) {
  const nlohmann::json doc = detail::parse_document(source, "camera document");
  if (!doc.is_object()) throw ParseError("camera document root must be an object");
  CameraIntrinsics cam;
  try {
    cam.fx = doc.at("fx").get<double>();
    cam.fy = doc.at("fy").get<double>();
    cam.cx = doc.at("cx").get<double>();
    cam.cy = doc.at("cy").get<double>();
    cam.width = doc.at("width").get<std::uint32_t>();
    cam.height = doc.at("height").get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("camera document malformed: ") + e.what());
  }
  validate_camera(cam);
  return cam;
}

inline void save_camera(std::ostream& out, const CameraIntrinsics& cam) {
  out << nlohmann::json{{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx},
                        {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}}
             .dump(2)
      << '\n';
}

// --- Bone orientation records (retarget output) ---
// One pose per line: {"user", "timestamp_us", "root":[x,y,z], "bones":[[w,x,y,z] x N]}

inline std::vector<BoneOrientationSet> load_orientation_records(std::istream& source) {
  std::vector<BoneOrientationSet> records;
  detail::for_each_record(source, "orientation records", [&](const nlohmann::json& j, std::size_t lineno) {
    try {
      BoneOrientationSet set;
      set.user = j.at("user").get<UserId>();
      set.timestamp_us = j.at("timestamp_us").get<std::uint64_t>();
      set.root_position = detail::vec3_from_array(j.at("root"), "root");
      for (const auto& jq : j.at("bones")) {
        set.local_rotations.push_back(detail::quat_from_array(jq, "bones"));
      }
      records.push_back(std::move(set));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("orientation records line " + std::to_string(lineno) +
                       " malformed: " + e.what());
    }
  });
  return records;
}

inline void save_orientation_records(std::ostream& out,
                                     const std::vector<BoneOrientationSet>& records) {
  for (const BoneOrientationSet& set : records) {
    nlohmann::json bones = nlohmann::json::array();
    for (const UnitQuat& q : set.local_rotations) bones.push_back(detail::quat_to_array(q));
    out << nlohmann::json{{"user", set.user},
                          {"timestamp_us", set.timestamp_us},
                          {"root", detail::vec3_to_array(set.root_position)},
                          {"bones", std::move(bones)}}
               .dump()
        << '\n';
  }
}

// --- Object pose records (track output) ---
// One pose per line: {"entity", "timestamp_us", "pos":[x,y,z], "rot":[w,x,y,z],
//   "reprojection_error", "valid"}

inline std::vector<ObjectPose> load_object_pose_records(std::istream& source) {
  std::vector<ObjectPose> records;
  detail::for_each_record(source, "object pose records", [&](const nlohmann::json& j, std::size_t lineno) {
    try {
      ObjectPose p;
      p.entity = j.at("entity").get<EntityId>();
      p.timestamp_us = j.at("timestamp_us").get<std::uint64_t>();
      p.pose.position = detail::vec3_from_array(j.at("pos"), "pos");
      p.pose.rotation = detail::quat_from_array(j.at("rot"), "rot");
      p.reprojection_error = j.at("reprojection_error").get<double>();
      p.valid = j.at("valid").get<bool>();
      records.push_back(p);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("object pose records line " + std::to_string(lineno) +
                       " malformed: " + e.what());
    }
  });
  return records;
}

inline void save_object_pose_records(std::ostream& out, const std::vector<ObjectPose>& records) {
  for (const ObjectPose& p : records) {
    out << nlohmann::json{{"entity", p.entity},
                          {"timestamp_us", p.timestamp_us},
                          {"pos", detail::vec3_to_array(p.pose.position)},
                          {"rot", detail::quat_to_array(p.pose.rotation)},
                          {"reprojection_error", p.reprojection_error},
                          {"valid", p.valid}}
               .dump()
        << '\n';
  }
}

// --- Session event log ---
// One event per line: {"tick", "kind", "participants": {"user", "entity", "hand"}}

inline const char* event_kind_from_name(const std::string& name, EventKind& out) {
  for (const EventKind k :
       {EventKind::Grabbed, EventKind::Released, EventKind::PortalUnlocked, EventKind::TRexSpawned}) {
    if (name == event_kind_name(k)) {
      out = k;
      return nullptr;
    }
  }
  return "unknown event kind";
}

inline std::vector<WorldEvent> load_event_log(std::istream& source) {
  std::vector<WorldEvent> events;
  detail::for_each_record(source, "event log", [&](const nlohmann::json& j, std::size_t lineno) {
    try {
      WorldEvent ev;
      const std::string kind = j.at("kind").get<std::string>();
      if (event_kind_from_name(kind, ev.kind) != nullptr) {
        throw ValidationError("event log line " + std::to_string(lineno) + ": unknown kind '" +
                              kind + "'");
      }
      ev.tick = j.at("tick").get<Tick>();
      const auto& p = j.at("participants");
      ev.user = p.at("user").get<UserId>();
      ev.entity = p.at("entity").get<EntityId>();
      ev.aux = p.at("hand").get<std::uint32_t>();
      events.push_back(ev);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("event log line " + std::to_string(lineno) + " malformed: " + e.what());
    }
  });
  return events;
}

inline void save_event_log(std::ostream& out, const std::vector<WorldEvent>& events) {
  for (const WorldEvent& ev : events) {
    out << nlohmann::json{{"tick", ev.tick},
                          {"kind", event_kind_name(ev.kind)},
                          {"participants",
                           {{"user", ev.user}, {"entity", ev.entity}, {"hand", ev.aux}}}}
               .dump()
        << '\n';
  }
}

}  // namespace ms2
