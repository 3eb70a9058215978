// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Client side of the sync loop: a deterministic lossy channel for simulation,
// and the snapshot-consuming client world with interpolation and an
// egocentric view pose.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <vector>

#include <ms2/core.hpp>
#include <ms2/retarget.hpp>
#include <ms2/wire.hpp>

namespace ms2 {

struct UnknownUserError : Error {
  using Error::Error;
};

namespace detail {

// One uniform draw in [0,1). The engine is bit-exact across standard
// libraries, and so is this mapping; distributions from <random> are not.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Derives independent stream seeds from one base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

struct ChannelConfig {
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  double loss_fraction = 0.0;
  double duplication_fraction = 0.0;
  std::uint64_t rng_seed = 0;
  bool operator==(const ChannelConfig&) const = default;
};

inline void validate_channel_config(const ChannelConfig& c) {
  if (!(c.latency_ms >= 0.0) || !std::isfinite(c.latency_ms)) {
    throw ValidationError("channel latency_ms must be finite and >= 0");
  }
  if (!(c.jitter_ms >= 0.0) || !std::isfinite(c.jitter_ms)) {
    throw ValidationError("channel jitter_ms must be finite and >= 0");
  }
  if (!(c.loss_fraction >= 0.0 && c.loss_fraction < 1.0)) {
    throw ValidationError("channel loss_fraction must be in [0, 1)");
  }
  if (!(c.duplication_fraction >= 0.0 && c.duplication_fraction < 1.0)) {
    throw ValidationError("channel duplication_fraction must be in [0, 1)");
  }
}

struct ChannelStats {
  std::uint64_t submitted = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  std::uint64_t duplicated = 0;
  std::uint64_t total_delay_us = 0;  // summed over delivered copies
  bool operator==(const ChannelStats&) const = default;
};

// One-directional datagram link with seeded latency, jitter, loss and
// duplication. Every submit consumes exactly four uniform draws, so the
// schedule of later datagrams never depends on earlier outcomes.
class Channel {
 public:
  explicit Channel(const ChannelConfig& config) : config_(config), eng_(config.rng_seed) {
    validate_channel_config(config);
  }

  void submit(std::vector<std::uint8_t> datagram, std::uint64_t now_us) {
    const double u_loss = detail::uniform01(eng_);
    const double u_dup = detail::uniform01(eng_);
    const double u_j1 = detail::uniform01(eng_);
    const double u_j2 = detail::uniform01(eng_);
    ++stats_.submitted;
    if (u_loss < config_.loss_fraction) {
      ++stats_.lost;
      return;
    }
    if (u_dup < config_.duplication_fraction) {
      ++stats_.duplicated;
      enqueue(datagram, now_us, u_j2);
    }
    enqueue(std::move(datagram), now_us, u_j1);
  }

  // Delivers everything due at or before now_us, in (delivery time,
  // submission order) order.
  std::vector<std::vector<std::uint8_t>> poll(std::uint64_t now_us) {
    std::vector<std::vector<std::uint8_t>> out;
    while (!queue_.empty() && queue_.top().delivery_us <= now_us) {
      out.push_back(queue_.top().datagram);
      stats_.total_delay_us += queue_.top().delay_us;
      ++stats_.delivered;
      queue_.pop();
    }
    return out;
  }

  std::optional<std::uint64_t> next_delivery_us() const {
    if (queue_.empty()) return std::nullopt;
    return queue_.top().delivery_us;
  }

  std::size_t pending() const { return queue_.size(); }
  const ChannelStats& stats() const { return stats_; }
  const ChannelConfig& config() const { return config_; }

 private:
  struct InFlight {
    std::uint64_t delivery_us;
    std::uint64_t order;
    std::uint64_t delay_us;
    std::vector<std::uint8_t> datagram;
    bool operator>(const InFlight& o) const {
      if (delivery_us != o.delivery_us) return delivery_us > o.delivery_us;
      return order > o.order;
    }
  };

  void enqueue(std::vector<std::uint8_t> datagram, std::uint64_t now_us, double u_jitter) {
    const double jitter = config_.jitter_ms * (2.0 * u_jitter - 1.0);
    const double delay_ms = std::max(0.0, config_.latency_ms + jitter);
    const auto delay_us = static_cast<std::uint64_t>(std::llround(delay_ms * 1000.0));
    queue_.push(InFlight{now_us + delay_us, order_++, delay_us, std::move(datagram)});
  }

  ChannelConfig config_;
  std::mt19937_64 eng_;
  std::uint64_t order_ = 0;
  ChannelStats stats_;
  std::priority_queue<InFlight, std::vector<InFlight>, std::greater<>> queue_;
};

struct ClientStats {
  std::uint64_t snapshots_applied = 0;
  std::uint64_t stale_dropped = 0;
  std::uint64_t duplicates_dropped = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t events_surfaced = 0;
  bool operator==(const ClientStats&) const = default;
};

// Interpolated world sample at one render instant.
struct WorldSample {
  std::map<UserId, BoneOrientationSet> users;
  std::map<EntityId, Transform> objects;
  std::map<EntityId, bool> object_valid;
  bool portal_unlocked = false;
};

inline constexpr int kExtrapolationCapTicks = 3;
inline constexpr std::size_t kSnapshotBufferCap = 64;

// One client's view of the session: buffers snapshots by tick, surfaces
// events exactly once, and reconstructs poses at fractional render ticks.
class ClientWorld {
 public:
  ClientWorld(UserId user, const RigDefinition& rig, std::uint32_t interpolation_delay_ticks = 2)
      : user_(user), rig_(&rig), delay_ticks_(interpolation_delay_ticks) {}

  UserId user() const { return user_; }
  bool joined() const { return joined_; }
  std::uint32_t tick_rate_hz() const { return tick_rate_hz_; }

  // Feeds one received datagram. Returns events surfaced by it, in event-id
  // order, each exactly once across the whole session.
  std::vector<wire::EventMsg> on_datagram(const std::vector<std::uint8_t>& datagram) {
    const wire::DecodeResult r = wire::decode(datagram);
    if (std::holds_alternative<wire::DecodeError>(r)) {
      ++stats_.decode_errors;
      return {};
    }
    const auto& m = std::get<wire::Message>(r);
    if (const auto* ack = std::get_if<wire::JoinAck>(&m.payload)) {
      if (ack->user == user_) {
        joined_ = true;
        tick_rate_hz_ = ack->tick_rate_hz;
      }
      return {};
    }
    if (const auto* snap = std::get_if<wire::SnapshotMsg>(&m.payload)) {
      apply_snapshot(m.tick, *snap, datagram);
      return {};
    }
    if (const auto* ev = std::get_if<wire::EventMsg>(&m.payload)) {
      return apply_event(*ev);
    }
    return {};
  }

  // Tick of the newest buffered snapshot, if any.
  std::optional<Tick> newest_tick() const {
    if (buffer_.empty()) return std::nullopt;
    return buffer_.rbegin()->first;
  }

  // Render instant the interpolation delay currently maps to.
  std::optional<double> render_tick() const {
    const auto newest = newest_tick();
    if (!newest) return std::nullopt;
    return static_cast<double>(*newest) - static_cast<double>(delay_ticks_);
  }

  // Interpolates the buffered snapshots at the given render tick. Between
  // brackets: positions lerp, rotations nearest-hemisphere nlerp. Past the
  // newest snapshot: velocity extrapolation capped at kExtrapolationCapTicks,
  // then hold. Before the oldest: clamp.
  WorldSample sample(double render_tick) {
    last_sampled_ = std::max(last_sampled_.value_or(render_tick), render_tick);
    WorldSample out;
    if (buffer_.empty()) return out;

    const auto newest = buffer_.rbegin()->first;
    if (render_tick >= static_cast<double>(newest)) {
      return sample_at_or_past_newest(render_tick);
    }
    const auto oldest = buffer_.begin()->first;
    if (render_tick <= static_cast<double>(oldest)) {
      return exact_sample(buffer_.begin()->second);
    }

    // First snapshot with tick >= render_tick; render_tick is strictly
    // between oldest and newest here.
    const auto hi = buffer_.lower_bound(static_cast<Tick>(std::ceil(render_tick)));
    if (static_cast<double>(hi->first) == render_tick) return exact_sample(hi->second);
    auto lo = std::prev(hi);
    const double t = (render_tick - static_cast<double>(lo->first)) /
                     (static_cast<double>(hi->first) - static_cast<double>(lo->first));
    return blend(lo->second, hi->second, t);
  }

  // Egocentric view: interpolated head position with the headset's own
  // orientation (the retargeted head bone carries no twist).
  Transform view_pose(const WorldSample& sample, UserId user, const UnitQuat& hmd_orientation) const {
    const auto it = sample.users.find(user);
    if (it == sample.users.end()) {
      throw UnknownUserError("user " + std::to_string(user) + " not present in world sample");
    }
    const auto joints = forward_kinematics(*rig_, it->second);
    return Transform{joints[kHead], hmd_orientation};
  }

  // Event-id high-water mark: every id at or below it has been surfaced.
  // Sent back to the server in heartbeat headers as the acknowledgement.
  std::uint32_t event_ack() const { return event_hwm_; }

  std::uint32_t next_seq() { return out_seq_++; }

  const ClientStats& stats() const { return stats_; }

  // Payload bytes of the newest applied snapshot, for convergence checks.
  const std::vector<std::uint8_t>& newest_snapshot_payload() const { return newest_payload_; }

 private:
  void apply_snapshot(Tick tick, const wire::SnapshotMsg& snap,
                      const std::vector<std::uint8_t>& datagram) {
    if (last_sampled_ && static_cast<double>(tick) <= std::floor(*last_sampled_)) {
      ++stats_.stale_dropped;
      return;
    }
    if (!buffer_.empty() && tick <= buffer_.rbegin()->first) {
      // Not newest: useful only if it fills a gap; a second copy of a
      // buffered tick is a duplicate.
      if (buffer_.count(tick)) {
        ++stats_.duplicates_dropped;
        return;
      }
      buffer_.emplace(tick, snap);
    } else {
      buffer_.emplace(tick, snap);
      newest_payload_.assign(datagram.begin() + wire::kHeaderSize, datagram.end());
    }
    ++stats_.snapshots_applied;
    while (buffer_.size() > kSnapshotBufferCap) buffer_.erase(buffer_.begin());
  }

  std::vector<wire::EventMsg> apply_event(const wire::EventMsg& ev) {
    std::vector<wire::EventMsg> surfaced;
    if (ev.event_id <= event_hwm_) return surfaced;  // already seen (retransmit)
    pending_events_.emplace(ev.event_id, ev);
    // Surface in id order; a gap holds everything behind it.
    while (!pending_events_.empty() && pending_events_.begin()->first == event_hwm_ + 1) {
      surfaced.push_back(pending_events_.begin()->second);
      pending_events_.erase(pending_events_.begin());
      ++event_hwm_;
      ++stats_.events_surfaced;
    }
    return surfaced;
  }

  static BoneOrientationSet to_orientation_set(const wire::SnapshotUser& u) {
    BoneOrientationSet set;
    set.user = u.id;
    set.root_position = Vec3{u.root[0], u.root[1], u.root[2]};
    set.local_rotations.reserve(u.bones.size());
    for (const auto& q : u.bones) {
      set.local_rotations.push_back(UnitQuat{q[0], q[1], q[2], q[3]});
    }
    return set;
  }

  static Transform to_transform(const wire::SnapshotObject& o) {
    return Transform{Vec3{o.px, o.py, o.pz}, UnitQuat{o.qw, o.qx, o.qy, o.qz}};
  }

  static WorldSample exact_sample(const wire::SnapshotMsg& snap) {
    WorldSample out;
    for (const auto& u : snap.users) out.users.emplace(u.id, to_orientation_set(u));
    for (const auto& o : snap.objects) {
      out.objects.emplace(o.id, to_transform(o));
      out.object_valid.emplace(o.id, o.valid != 0);
    }
    out.portal_unlocked = snap.portal != 0;
    return out;
  }

  WorldSample blend(const wire::SnapshotMsg& a, const wire::SnapshotMsg& b, double t) const {
    WorldSample out;
    std::map<UserId, const wire::SnapshotUser*> in_a;
    for (const auto& u : a.users) in_a.emplace(u.id, &u);
    for (const auto& ub : b.users) {
      const auto it = in_a.find(ub.id);
      if (it == in_a.end()) {
        out.users.emplace(ub.id, to_orientation_set(ub));
        continue;
      }
      BoneOrientationSet sa = to_orientation_set(*it->second);
      const BoneOrientationSet sb = to_orientation_set(ub);
      sa.root_position = lerp(sa.root_position, sb.root_position, t);
      const std::size_t n = std::min(sa.local_rotations.size(), sb.local_rotations.size());
      for (std::size_t i = 0; i < n; ++i) {
        sa.local_rotations[i] = nlerp(sa.local_rotations[i], sb.local_rotations[i], t);
      }
      out.users.emplace(ub.id, std::move(sa));
    }
    for (const auto& ua : a.users) {
      if (!out.users.count(ua.id)) out.users.emplace(ua.id, to_orientation_set(ua));
    }

    std::map<EntityId, const wire::SnapshotObject*> obj_a;
    for (const auto& o : a.objects) obj_a.emplace(o.id, &o);
    for (const auto& ob : b.objects) {
      const auto it = obj_a.find(ob.id);
      if (it == obj_a.end()) {
        out.objects.emplace(ob.id, to_transform(ob));
        out.object_valid.emplace(ob.id, ob.valid != 0);
        continue;
      }
      const Transform ta = to_transform(*it->second);
      const Transform tb = to_transform(ob);
      out.objects.emplace(ob.id, Transform{lerp(ta.position, tb.position, t),
                                           nlerp(ta.rotation, tb.rotation, t)});
      out.object_valid.emplace(ob.id, ob.valid != 0);
    }
    for (const auto& oa : a.objects) {
      if (!out.objects.count(oa.id)) {
        out.objects.emplace(oa.id, to_transform(oa));
        out.object_valid.emplace(oa.id, oa.valid != 0);
      }
    }
    out.portal_unlocked = a.portal != 0;
    return out;
  }

  WorldSample sample_at_or_past_newest(double render_tick) const {
    const auto newest_it = buffer_.rbegin();
    const double newest = static_cast<double>(newest_it->first);
    if (render_tick == newest || buffer_.size() < 2) return exact_sample(newest_it->second);

    const auto prev_it = std::next(newest_it);
    const double dt = newest - static_cast<double>(prev_it->first);
    const double ahead = std::min(render_tick - newest, static_cast<double>(kExtrapolationCapTicks));
    WorldSample out = exact_sample(newest_it->second);
    const WorldSample prev = exact_sample(prev_it->second);

    for (auto& [id, set] : out.users) {
      const auto it = prev.users.find(id);
      if (it == prev.users.end()) continue;
      const Vec3 velocity = (set.root_position - it->second.root_position) * (1.0 / dt);
      set.root_position = set.root_position + velocity * ahead;
      // Rotations hold: extrapolating angular velocity amplifies noise.
    }
    for (auto& [id, pose] : out.objects) {
      const auto it = prev.objects.find(id);
      if (it == prev.objects.end()) continue;
      const Vec3 velocity = (pose.position - it->second.position) * (1.0 / dt);
      pose.position = pose.position + velocity * ahead;
    }
    return out;
  }

  UserId user_;
  const RigDefinition* rig_;
  std::uint32_t delay_ticks_;
  bool joined_ = false;
  std::uint32_t tick_rate_hz_ = 0;
  std::uint32_t out_seq_ = 1;
  std::uint32_t event_hwm_ = 0;
  std::optional<double> last_sampled_;
  std::map<Tick, wire::SnapshotMsg> buffer_;
  std::map<std::uint32_t, wire::EventMsg> pending_events_;
  std::vector<std::uint8_t> newest_payload_;
  ClientStats stats_;
};

}  // namespace ms2
