// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Scene model: the 1:1 physical-to-virtual correspondence. Walkable region
// and obstacles come from the room scan reduced to polygons and boxes; the
// proxy registry binds tracked physical objects to virtual entities.
// Ground plane is y = 0; walkable queries ignore y.

#pragma once

#include <cmath>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <ms2/core.hpp>

namespace ms2 {

// Point on the ground plane (x east, z north in room coordinates).
struct GroundPoint {
  double x = 0.0;
  double z = 0.0;
  bool operator==(const GroundPoint&) const = default;
};

using GroundPolygon = std::vector<GroundPoint>;

struct ObstacleBox {
  Vec3 min{};
  Vec3 max{};
  bool operator==(const ObstacleBox&) const = default;
};

struct ProxyBinding {
  EntityId physical_id = 0;
  EntityId virtual_entity = 0;
  Vec3 physical_extents{};
  Vec3 virtual_extents{};
  double marker_size = 0.0;  // edge length of the tracking marker, meters
  Transform initial_pose{};
  bool operator==(const ProxyBinding&) const = default;
};

struct SpawnPoint {
  Vec3 position{};
  double yaw_deg = 0.0;
  bool operator==(const SpawnPoint&) const = default;
};

struct SceneModel {
  std::string name;
  std::vector<GroundPolygon> walkable;
  std::vector<ObstacleBox> obstacles;
  std::vector<SpawnPoint> spawn_points;
  std::vector<ProxyBinding> proxies;
  bool operator==(const SceneModel&) const = default;
};

namespace detail {

inline double point_segment_distance2(GroundPoint p, GroundPoint a, GroundPoint b) {
  const double abx = b.x - a.x, abz = b.z - a.z;
  const double apx = p.x - a.x, apz = p.z - a.z;
  const double len2 = abx * abx + abz * abz;
  double t = len2 > 0.0 ? (apx * abx + apz * abz) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = apx - t * abx, dz = apz - t * abz;
  return dx * dx + dz * dz;
}

// Strict interior test: points on the outline count as outside.
inline bool point_in_polygon(const GroundPolygon& poly, GroundPoint p) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (point_segment_distance2(p, poly[i], poly[(i + 1) % n]) == 0.0) return false;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.z > p.z) != (b.z > p.z)) {
      const double xint = (b.x - a.x) * (p.z - a.z) / (b.z - a.z) + a.x;
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

inline int orientation(GroundPoint a, GroundPoint b, GroundPoint c) {
  const double v = (b.x - a.x) * (c.z - a.z) - (b.z - a.z) * (c.x - a.x);
  if (v > 1e-12) return 1;
  if (v < -1e-12) return -1;
  return 0;
}

inline bool on_segment(GroundPoint a, GroundPoint b, GroundPoint p) {
  return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
         std::min(a.z, b.z) - 1e-12 <= p.z && p.z <= std::max(a.z, b.z) + 1e-12;
}

inline bool segments_intersect(GroundPoint p1, GroundPoint p2, GroundPoint q1, GroundPoint q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

inline bool polygon_self_intersects(const GroundPolygon& poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Skip edges sharing a vertex.
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) {
        return true;
      }
    }
  }
  return false;
}

inline bool inside_box(const ObstacleBox& b, const Vec3& p) {
  return p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y &&
         p.z >= b.min.z && p.z <= b.max.z;
}

inline bool inside_footprint(const ObstacleBox& b, GroundPoint p) {
  return p.x >= b.min.x && p.x <= b.max.x && p.z >= b.min.z && p.z <= b.max.z;
}

inline double point_box_distance(const ObstacleBox& b, const Vec3& p) {
  const double dx = std::max({b.min.x - p.x, 0.0, p.x - b.max.x});
  const double dy = std::max({b.min.y - p.y, 0.0, p.y - b.max.y});
  const double dz = std::max({b.min.z - p.z, 0.0, p.z - b.max.z});
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace detail

inline bool point_walkable(const SceneModel& scene, const Vec3& p) {
  const GroundPoint g{p.x, p.z};
  bool inside = false;
  for (const auto& poly : scene.walkable) {
    if (detail::point_in_polygon(poly, g)) {
      inside = true;
      break;
    }
  }
  if (!inside) return false;
  for (const auto& box : scene.obstacles) {
    if (detail::inside_footprint(box, g)) return false;
  }
  return true;
}

// Distance to the nearest obstacle surface or walkable outline; 0 inside an
// obstacle. Outline distance is measured in the ground plane.
inline double nearest_obstacle_distance(const SceneModel& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  const GroundPoint g{p.x, p.z};
  for (const auto& poly : scene.walkable) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      best = std::min(best, detail::point_segment_distance2(g, poly[i], poly[(i + 1) % n]));
    }
  }
  best = std::sqrt(best);
  for (const auto& box : scene.obstacles) {
    if (detail::inside_box(box, p)) return 0.0;
    best = std::min(best, detail::point_box_distance(box, p));
  }
  return best;
}

namespace detail {

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw ParseError("field '" + field + "' must be an array of 3 numbers");
  }
  Vec3 v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!v.finite()) throw ValidationError("field '" + field + "' has non-finite component");
  return v;
}

inline Transform transform_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object()) throw ParseError("field '" + field + "' must be an object");
  Transform t;
  t.position = vec3_from_json(j.at("pos"), field + ".pos");
  const auto& r = j.at("rot");
  if (!r.is_array() || r.size() != 4) {
    throw ParseError("field '" + field + ".rot' must be an array of 4 numbers [w,x,y,z]");
  }
  t.rotation = UnitQuat{r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()};
  if (!t.rotation.finite() || std::abs(t.rotation.norm() - 1.0) > 1e-3) {
    throw ValidationError("field '" + field + ".rot' is not a unit quaternion");
  }
  // Stored as given (within tolerance) so save/load round-trips exactly.
  return t;
}

inline nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

inline nlohmann::json transform_to_json(const Transform& t) {
  return {{"pos", vec3_to_json(t.position)},
          {"rot", nlohmann::json::array({t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z})}};
}

}  // namespace detail

// Per-axis virtual/physical extent ratio allowed for a proxy binding.
inline constexpr double kProxySizeRatioMin = 0.75;
inline constexpr double kProxySizeRatioMax = 1.25;

// Parses and validates a scene document. Throws ParseError for malformed
// input and ValidationError naming the first violated invariant.
inline SceneModel load_scene(std::istream& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("scene document root must be an object");

  SceneModel scene;
  try {
    scene.name = doc.at("name").get<std::string>();

    for (const auto& jpoly : doc.at("walkable")) {
      GroundPolygon poly;
      for (const auto& jp : jpoly) {
        if (!jp.is_array() || jp.size() != 2) {
          throw ParseError("walkable polygon vertex must be an [x,z] pair");
        }
        const GroundPoint g{jp[0].get<double>(), jp[1].get<double>()};
        if (!std::isfinite(g.x) || !std::isfinite(g.z)) {
          throw ValidationError("walkable polygon vertex has non-finite component");
        }
        poly.push_back(g);
      }
      if (poly.size() < 3) throw ValidationError("walkable polygon has fewer than 3 vertices");
      if (detail::polygon_self_intersects(poly)) {
        throw ValidationError("walkable polygon is self-intersecting");
      }
      scene.walkable.push_back(std::move(poly));
    }

    for (const auto& jbox : doc.at("obstacles")) {
      ObstacleBox box{detail::vec3_from_json(jbox.at("min"), "obstacles.min"),
                      detail::vec3_from_json(jbox.at("max"), "obstacles.max")};
      if (!(box.max.x > box.min.x && box.max.y > box.min.y && box.max.z > box.min.z)) {
        throw ValidationError("obstacle box must have positive extents");
      }
      scene.obstacles.push_back(box);
    }

    for (const auto& jsp : doc.at("spawn_points")) {
      SpawnPoint sp;
      sp.position = detail::vec3_from_json(jsp.at("pos"), "spawn_points.pos");
      sp.yaw_deg = jsp.at("yaw_deg").get<double>();
      if (!std::isfinite(sp.yaw_deg)) throw ValidationError("spawn point yaw_deg is non-finite");
      scene.spawn_points.push_back(sp);
    }

    for (const auto& jp : doc.at("proxies")) {
      ProxyBinding b;
      b.physical_id = jp.at("physical_id").get<EntityId>();
      b.virtual_entity = jp.at("virtual_entity").get<EntityId>();
      b.physical_extents = detail::vec3_from_json(jp.at("physical_extents"), "proxies.physical_extents");
      b.virtual_extents = detail::vec3_from_json(jp.at("virtual_extents"), "proxies.virtual_extents");
      b.marker_size = jp.at("marker_size").get<double>();
      b.initial_pose = detail::transform_from_json(jp.at("initial_pose"), "proxies.initial_pose");

      const double pe[3] = {b.physical_extents.x, b.physical_extents.y, b.physical_extents.z};
      const double ve[3] = {b.virtual_extents.x, b.virtual_extents.y, b.virtual_extents.z};
      for (int axis = 0; axis < 3; ++axis) {
        if (!(pe[axis] > 0.0) || !(ve[axis] > 0.0)) {
          throw ValidationError("proxy extents must be positive on every axis");
        }
      }
      for (int axis = 0; axis < 3; ++axis) {
        const double ratio = ve[axis] / pe[axis];
        if (ratio < kProxySizeRatioMin || ratio > kProxySizeRatioMax) {
          std::ostringstream msg;
          msg << "proxy binding " << b.physical_id << " fails the size match rule: axis " << axis
              << " virtual/physical ratio " << ratio << " outside [" << kProxySizeRatioMin << ", "
              << kProxySizeRatioMax << "]";
          throw ValidationError(msg.str());
        }
      }
      if (!(b.marker_size > 0.0)) throw ValidationError("proxy marker_size must be positive");
      for (const auto& other : scene.proxies) {
        if (other.physical_id == b.physical_id) {
          throw ValidationError("duplicate proxy physical_id");
        }
        if (other.virtual_entity == b.virtual_entity) {
          throw ValidationError("duplicate proxy virtual_entity");
        }
      }
      scene.proxies.push_back(b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene document malformed: ") + e.what());
  }

  for (const auto& sp : scene.spawn_points) {
    if (!point_walkable(scene, sp.position)) {
      throw ValidationError("spawn point lies outside the walkable region");
    }
  }
  return scene;
}

inline SceneModel load_scene(const std::string& text) {
  std::istringstream in(text);
  return load_scene(in);
}

inline nlohmann::json scene_to_json(const SceneModel& scene) {
  nlohmann::json doc;
  doc["name"] = scene.name;
  doc["walkable"] = nlohmann::json::array();
  for (const auto& poly : scene.walkable) {
    nlohmann::json jp = nlohmann::json::array();
    for (const auto& v : poly) jp.push_back(nlohmann::json::array({v.x, v.z}));
    doc["walkable"].push_back(jp);
  }
  doc["obstacles"] = nlohmann::json::array();
  for (const auto& box : scene.obstacles) {
    doc["obstacles"].push_back(
        {{"min", detail::vec3_to_json(box.min)}, {"max", detail::vec3_to_json(box.max)}});
  }
  doc["spawn_points"] = nlohmann::json::array();
  for (const auto& sp : scene.spawn_points) {
    doc["spawn_points"].push_back({{"pos", detail::vec3_to_json(sp.position)}, {"yaw_deg", sp.yaw_deg}});
  }
  doc["proxies"] = nlohmann::json::array();
  for (const auto& p : scene.proxies) {
    doc["proxies"].push_back({{"physical_id", p.physical_id},
                              {"virtual_entity", p.virtual_entity},
                              {"physical_extents", detail::vec3_to_json(p.physical_extents)},
                              {"virtual_extents", detail::vec3_to_json(p.virtual_extents)},
                              {"marker_size", p.marker_size},
                              {"initial_pose", detail::transform_to_json(p.initial_pose)}});
  }
  return doc;
}

inline std::string save_scene(const SceneModel& scene) { return scene_to_json(scene).dump(2); }

}  // namespace ms2
