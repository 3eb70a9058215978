// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Gameplay event logic: grab attribution, the cube-stacking condition, and
// the one-shot portal unlock with its creature spawn. Pure tick-driven state
// transitions; poses come from tracking, never from grab state.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include <ms2/core.hpp>
#include <ms2/marker.hpp>

namespace ms2 {

enum class EventKind : std::uint8_t {
  Grabbed = 1,
  Released = 2,
  PortalUnlocked = 3,
  TRexSpawned = 4,
};

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Grabbed: return "Grabbed";
    case EventKind::Released: return "Released";
    case EventKind::PortalUnlocked: return "PortalUnlocked";
    case EventKind::TRexSpawned: return "TRexSpawned";
  }
  return "Unknown";
}

struct WorldEvent {
  EventKind kind = EventKind::Grabbed;
  Tick tick = 0;
  UserId user = 0;      // 0 when not user-specific
  EntityId entity = 0;  // 0 when not entity-specific
  std::uint32_t aux = 0;  // hand index for grab/release events
  bool operator==(const WorldEvent&) const = default;
};

// Hand indices for grab attribution.
inline constexpr std::uint32_t kHandLeftIndex = 0;
inline constexpr std::uint32_t kHandRightIndex = 1;

struct HandSample {
  UserId user = 0;
  std::uint32_t hand = kHandLeftIndex;
  Vec3 position{};
};

inline constexpr double kGrabRadius = 0.15;
inline constexpr double kReleaseRadius = 0.25;
inline constexpr int kGrabStreakTicks = 3;
inline constexpr int kReleaseStreakTicks = 3;
inline constexpr double kStackMaxGap = 0.02;
inline constexpr double kStackRestSpeed = 0.05;
inline constexpr int kStackDwellTicks = 10;

struct GrabState {
  UserId user = 0;
  std::uint32_t hand = 0;
  Tick since_tick = 0;
};

struct InteractionState {
  // Free objects are absent from this map.
  std::map<EntityId, GrabState> grabbed;
  bool portal_unlocked = false;
  Tick portal_unlock_tick = 0;

  // Proximity streaks keyed by (object, user, hand); release streaks per
  // grabbed object.
  std::map<std::tuple<EntityId, UserId, std::uint32_t>, int> approach_streak;
  std::map<EntityId, int> release_streak;

  int stack_streak = 0;
  Tick last_grab_tick = 0;
  bool grab_ran = false;
  Tick last_stack_tick = 0;
  bool stack_ran = false;

  // Last two accepted poses per object for finite-difference speed.
  struct PoseHistory {
    Transform prev{};
    std::uint64_t prev_us = 0;
    Transform last{};
    std::uint64_t last_us = 0;
    int count = 0;
  };
  std::map<EntityId, PoseHistory> history;
};

namespace detail {

inline double object_speed(const InteractionState::PoseHistory& h) {
  if (h.count < 2) return 0.0;
  const double dist = (h.last.position - h.prev.position).norm();
  if (h.last_us <= h.prev_us) {
    return dist < 1e-9 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return dist / (static_cast<double>(h.last_us - h.prev_us) * 1e-6);
}

}  // namespace detail

// Advances grab attribution by one tick. Re-evaluating an already processed
// tick is a no-op, which makes replayed or duplicated ticks harmless.
inline std::vector<WorldEvent> grab_update(InteractionState& state, Tick tick,
                                           const std::vector<HandSample>& hands,
                                           const std::vector<ObjectPose>& objects) {
  if (state.grab_ran && tick <= state.last_grab_tick) return {};
  state.grab_ran = true;
  state.last_grab_tick = tick;

  std::vector<WorldEvent> events;

  for (const ObjectPose& obj : objects) {
    const auto grabbed_it = state.grabbed.find(obj.entity);

    if (grabbed_it == state.grabbed.end()) {
      // Free object: advance approach streaks, then pick a grabber.
      // Nearest hand wins; lower user id, then lower hand index, break ties.
      std::optional<std::tuple<double, UserId, std::uint32_t>> best;
      for (const HandSample& h : hands) {
        const auto key = std::make_tuple(obj.entity, h.user, h.hand);
        const double d = (h.position - obj.pose.position).norm();
        int& streak = state.approach_streak[key];
        streak = d <= kGrabRadius ? streak + 1 : 0;
        if (streak >= kGrabStreakTicks) {
          const auto cand = std::make_tuple(d, h.user, h.hand);
          if (!best || cand < *best) best = cand;
        }
      }
      if (best) {
        const UserId user = std::get<1>(*best);
        const std::uint32_t hand = std::get<2>(*best);
        state.grabbed[obj.entity] = {user, hand, tick};
        state.release_streak[obj.entity] = 0;
        // Clear streaks for this object so a later release starts fresh.
        for (auto it = state.approach_streak.begin(); it != state.approach_streak.end();) {
          if (std::get<0>(it->first) == obj.entity) {
            it = state.approach_streak.erase(it);
          } else {
            ++it;
          }
        }
        events.push_back({EventKind::Grabbed, tick, user, obj.entity, hand});
      }
    } else {
      // Grabbed object: watch the grabber's hand for release.
      const GrabState& g = grabbed_it->second;
      double d = std::numeric_limits<double>::infinity();
      for (const HandSample& h : hands) {
        if (h.user == g.user && h.hand == g.hand) {
          d = (h.position - obj.pose.position).norm();
          break;
        }
      }
      int& streak = state.release_streak[obj.entity];
      streak = d > kReleaseRadius ? streak + 1 : 0;
      if (streak >= kReleaseStreakTicks) {
        events.push_back({EventKind::Released, tick, g.user, obj.entity, g.hand});
        state.grabbed.erase(grabbed_it);
        state.release_streak.erase(obj.entity);
      }
    }
  }
  return events;
}

namespace detail {

// One directed test: does `top` rest on `bottom`?
inline bool resting_on(const ObjectPose& top, const ObjectPose& bottom, double edge) {
  const double dx = top.pose.position.x - bottom.pose.position.x;
  const double dz = top.pose.position.z - bottom.pose.position.z;
  const double horizontal = std::sqrt(dx * dx + dz * dz);
  if (horizontal > 0.5 * edge) return false;
  const double top_bottom_face = top.pose.position.y - edge / 2.0;
  const double bottom_top_face = bottom.pose.position.y + edge / 2.0;
  return std::abs(top_bottom_face - bottom_top_face) <= kStackMaxGap;
}

}  // namespace detail

// Advances the stacking detector by one tick for the cube pair. Records pose
// history (for rest-speed estimation) only on fresh ticks; duplicated ticks
// are no-ops.
inline std::vector<WorldEvent> stack_update(InteractionState& state, Tick tick,
                                            const ObjectPose& cube_a, const ObjectPose& cube_b,
                                            double edge) {
  if (state.stack_ran && tick <= state.last_stack_tick) return {};
  state.stack_ran = true;
  state.last_stack_tick = tick;

  for (const ObjectPose* obj : {&cube_a, &cube_b}) {
    auto& h = state.history[obj->entity];
    if (obj->valid) {
      h.prev = h.last;
      h.prev_us = h.last_us;
      h.last = obj->pose;
      h.last_us = obj->timestamp_us;
      if (h.count < 2) ++h.count;
    }
  }

  bool condition = false;
  if (cube_a.valid && cube_b.valid) {
    const bool geometry =
        detail::resting_on(cube_a, cube_b, edge) || detail::resting_on(cube_b, cube_a, edge);
    const bool at_rest = detail::object_speed(state.history[cube_a.entity]) < kStackRestSpeed &&
                         detail::object_speed(state.history[cube_b.entity]) < kStackRestSpeed;
    condition = geometry && at_rest;
  }

  state.stack_streak = condition ? state.stack_streak + 1 : 0;

  std::vector<WorldEvent> events;
  if (state.stack_streak >= kStackDwellTicks && !state.portal_unlocked) {
    state.portal_unlocked = true;
    state.portal_unlock_tick = tick;
    events.push_back({EventKind::PortalUnlocked, tick, 0, 0, 0});
    events.push_back({EventKind::TRexSpawned, tick, 0, 0, 0});
  }
  return events;
}

}  // namespace ms2
