// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Authoritative session core. Ingests tracker datagrams, advances the world
// at a fixed tick rate, runs the interaction rules, and broadcasts one
// snapshot per tick. Within a tick every client receives byte-identical
// snapshot payloads; only the per-destination header sequence differs.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <ms2/core.hpp>
#include <ms2/interaction.hpp>
#include <ms2/marker.hpp>
#include <ms2/retarget.hpp>
#include <ms2/scene.hpp>
#include <ms2/wire.hpp>

namespace ms2 {

struct SessionConfig {
  std::uint32_t tick_rate_hz = 60;
  std::uint32_t skeleton_input_hz = 30;
  std::uint32_t client_timeout_ticks = 300;
  std::uint32_t interpolation_delay_ticks = 2;
  SceneModel scene;
  RigDefinition rig;
};

inline void validate_session_config(const SessionConfig& c) {
  if (c.tick_rate_hz == 0) throw ValidationError("tick_rate_hz must be positive");
  if (c.skeleton_input_hz == 0) throw ValidationError("skeleton_input_hz must be positive");
  if (c.tick_rate_hz < c.skeleton_input_hz) {
    throw ValidationError("tick_rate_hz must be at least skeleton_input_hz");
  }
  if (c.client_timeout_ticks == 0) throw ValidationError("client_timeout_ticks must be positive");
  if (c.rig.bones.empty()) throw ValidationError("rig has no bones");
  if (c.rig.bones.size() > 255) throw ValidationError("rig exceeds 255 bones");
  validate_rig(c.rig);
}

struct SessionStats {
  std::uint64_t ticks = 0;
  std::uint64_t datagrams_in = 0;
  std::uint64_t datagrams_out = 0;
  std::uint64_t joins = 0;
  std::uint64_t stale_dropped = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t unknown_dropped = 0;
  std::uint64_t bad_frames = 0;
  std::uint64_t bad_poses = 0;
  std::uint64_t expired_clients = 0;
  std::uint64_t events_fired = 0;
  bool operator==(const SessionStats&) const = default;
};

// Opaque datagram source/destination (address:port for sockets, any stable
// label in simulation).
using Endpoint = std::string;

struct Outbound {
  Endpoint to;
  std::vector<std::uint8_t> datagram;
};

// Blend factor folding each fresh skeleton frame into the broadcast pose.
inline constexpr double kPoseSmoothingAlpha = 0.5;

class ServerCore {
 public:
  explicit ServerCore(SessionConfig config) : config_(std::move(config)) {
    validate_session_config(config_);
    for (const ProxyBinding& proxy : config_.scene.proxies) {
      ObjectTrack track;
      track.emitted.entity = proxy.virtual_entity;
      track.emitted.pose = proxy.initial_pose;
      track.emitted.valid = true;
      objects_.emplace(proxy.virtual_entity, std::move(track));
      proxy_order_.push_back(proxy.virtual_entity);
    }
    if (proxy_order_.size() >= 2) {
      const auto& a = config_.scene.proxies[0];
      const auto& b = config_.scene.proxies[1];
      stack_edge_ = std::min(a.virtual_extents.y, b.virtual_extents.y);
    }
    rebuild_snapshot();
  }

  const SessionConfig& config() const { return config_; }
  Tick current_tick() const { return current_tick_; }
  const SessionStats& stats() const { return stats_; }
  const std::vector<WorldEvent>& event_log() const { return event_log_; }
  const wire::SnapshotMsg& cached_snapshot() const { return cached_snapshot_; }
  const std::vector<std::uint8_t>& cached_snapshot_payload() const { return cached_payload_; }
  std::size_t client_count() const { return clients_.size(); }
  bool portal_unlocked() const { return interaction_.portal_unlocked; }

  // Handles one received datagram. Returns immediate replies (JOIN only);
  // everything else is folded into state and broadcast at the next tick.
  std::vector<Outbound> ingest(const std::vector<std::uint8_t>& datagram, const Endpoint& from,
                               std::uint64_t now_us) {
    ++stats_.datagrams_in;
    const wire::DecodeResult r = wire::decode(datagram);
    if (std::holds_alternative<wire::DecodeError>(r)) {
      ++stats_.decode_errors;
      return {};
    }
    const auto& m = std::get<wire::Message>(r);

    if (const auto* join = std::get_if<wire::Join>(&m.payload)) {
      auto [it, fresh] = clients_.try_emplace(from);
      it->second.user = join->user;
      it->second.last_heard_tick = current_tick_;
      if (fresh) ++stats_.joins;
      std::vector<Outbound> replies;
      replies.push_back(make_datagram(from, now_us,
                                      wire::JoinAck{join->user, config_.tick_rate_hz}, &it->second));
      replies.push_back(make_datagram(from, now_us, cached_snapshot_, &it->second));
      stats_.datagrams_out += replies.size();
      return replies;
    }

    if (const auto* sf = std::get_if<wire::SkeletonFrameMsg>(&m.payload)) {
      ingest_skeleton(m, *sf);
      touch(from);
      return {};
    }

    if (const auto* op = std::get_if<wire::ObjectPoseMsg>(&m.payload)) {
      ingest_object_pose(m, *op);
      touch(from);
      return {};
    }

    if (std::holds_alternative<wire::Heartbeat>(m.payload)) {
      const auto it = clients_.find(from);
      if (it == clients_.end()) {
        ++stats_.unknown_dropped;
        return {};
      }
      it->second.last_heard_tick = current_tick_;
      // Header tick carries the client's event-id high-water mark.
      if (m.tick > it->second.event_ack) it->second.event_ack = m.tick;
      return {};
    }

    // Server-to-client message types arriving here are not ours to handle.
    ++stats_.unknown_dropped;
    return {};
  }

  // Advances one tick: expiry, pose smoothing, object filtering, interaction
  // rules, then snapshot assembly and per-client outbound datagrams.
  std::vector<Outbound> tick(std::uint64_t now_us) {
    ++current_tick_;
    ++stats_.ticks;

    for (auto it = clients_.begin(); it != clients_.end();) {
      if (current_tick_ - it->second.last_heard_tick > config_.client_timeout_ticks) {
        it = clients_.erase(it);
        ++stats_.expired_clients;
      } else {
        ++it;
      }
    }
    for (auto it = users_.begin(); it != users_.end();) {
      if (current_tick_ - it->second.last_input_tick > config_.client_timeout_ticks) {
        it = users_.erase(it);
      } else {
        ++it;
      }
    }

    for (auto& [user, stream] : users_) {
      if (!stream.pending) continue;
      stream.broadcast = stream.has_broadcast
                             ? smooth_pose(stream.broadcast, *stream.pending, kPoseSmoothingAlpha)
                             : *stream.pending;
      stream.has_broadcast = true;
      stream.pending.reset();
    }

    for (auto& [entity, track] : objects_) {
      if (!track.pending) continue;
      track.emitted = track_update(track.tracker, *track.pending);
      track.pending.reset();
    }

    run_interaction();
    rebuild_snapshot();

    std::vector<Outbound> out;
    for (auto& [endpoint, rec] : clients_) {
      out.push_back(make_datagram(endpoint, now_us, cached_snapshot_, &rec));
      for (std::size_t i = rec.event_ack; i < event_log_.size(); ++i) {
        const WorldEvent& ev = event_log_[i];
        out.push_back(make_datagram(
            endpoint, now_us,
            wire::EventMsg{static_cast<std::uint32_t>(i + 1), static_cast<std::uint8_t>(ev.kind),
                           ev.user, ev.entity, ev.aux},
            &rec));
      }
    }
    stats_.datagrams_out += out.size();
    return out;
  }

 private:
  struct ClientRecord {
    UserId user = 0;
    Tick last_heard_tick = 0;
    std::uint32_t out_seq = 1;
    std::uint32_t event_ack = 0;  // highest event id acknowledged
  };

  struct UserStream {
    Seq seq = 0;
    bool has_seq = false;
    Tick last_input_tick = 0;
    std::optional<BoneOrientationSet> last_retargeted;  // ingest-side chain
    std::optional<BoneOrientationSet> pending;           // newest not yet blended
    BoneOrientationSet broadcast;
    bool has_broadcast = false;
  };

  struct ObjectTrack {
    Seq seq = 0;
    bool has_seq = false;
    TrackerState tracker;
    std::optional<ObjectPose> pending;
    ObjectPose emitted;
  };

  void touch(const Endpoint& from) {
    const auto it = clients_.find(from);
    if (it != clients_.end()) it->second.last_heard_tick = current_tick_;
  }

  void ingest_skeleton(const wire::Message& m, const wire::SkeletonFrameMsg& sf) {
    UserStream& stream = users_[sf.user];
    if (stream.has_seq && !wire::seq_newer(m.seq, stream.seq)) {
      ++stats_.stale_dropped;
      return;
    }
    stream.seq = m.seq;
    stream.has_seq = true;
    stream.last_input_tick = current_tick_;

    SkeletonFrame frame;
    frame.user = sf.user;
    frame.timestamp_us = m.timestamp_us;
    frame.joints.resize(kJointCount);
    for (std::size_t i = 0; i < kJointCount; ++i) {
      const wire::WireJoint& j = sf.joints[i];
      frame.joints[i].position = Vec3{j.px, j.py, j.pz};
      frame.joints[i].confidence =
          j.confidence <= 1 ? static_cast<JointConfidence>(j.confidence) : JointConfidence::NotTracked;
    }
    try {
      const BoneOrientationSet* previous =
          stream.last_retargeted ? &*stream.last_retargeted : nullptr;
      BoneOrientationSet set = retarget_frame(frame, config_.rig, previous);
      stream.last_retargeted = set;
      stream.pending = std::move(set);
    } catch (const BadFrameError&) {
      ++stats_.bad_frames;
    }
  }

  void ingest_object_pose(const wire::Message& m, const wire::ObjectPoseMsg& op) {
    const auto it = objects_.find(op.entity);
    if (it == objects_.end()) {
      ++stats_.unknown_dropped;
      return;
    }
    ObjectTrack& track = it->second;
    if (track.has_seq && !wire::seq_newer(m.seq, track.seq)) {
      ++stats_.stale_dropped;
      return;
    }
    track.seq = m.seq;
    track.has_seq = true;

    ObjectPose incoming;
    incoming.entity = op.entity;
    incoming.timestamp_us = m.timestamp_us;
    incoming.pose.position = Vec3{op.px, op.py, op.pz};
    incoming.pose.rotation = UnitQuat{op.qw, op.qx, op.qy, op.qz};
    incoming.reprojection_error = op.reprojection_error;
    incoming.valid = op.valid != 0;
    if (!incoming.pose.position.finite() || !incoming.pose.rotation.finite() ||
        std::abs(incoming.pose.rotation.norm() - 1.0) > 0.1 ||
        !std::isfinite(incoming.reprojection_error)) {
      ++stats_.bad_poses;
      return;
    }
    track.pending = incoming;
  }

  void run_interaction() {
    std::vector<HandSample> hands;
    for (const auto& [user, stream] : users_) {
      if (!stream.has_broadcast) continue;
      const auto joints = forward_kinematics(config_.rig, stream.broadcast);
      hands.push_back(HandSample{user, kHandLeftIndex, joints[kHandLeft]});
      hands.push_back(HandSample{user, kHandRightIndex, joints[kHandRight]});
    }
    std::vector<ObjectPose> poses;
    for (const EntityId id : proxy_order_) poses.push_back(objects_.at(id).emitted);

    std::vector<WorldEvent> events = grab_update(interaction_, current_tick_, hands, poses);
    if (poses.size() >= 2) {
      auto more = stack_update(interaction_, current_tick_, poses[0], poses[1], stack_edge_);
      events.insert(events.end(), more.begin(), more.end());
    }
    for (WorldEvent& ev : events) {
      event_log_.push_back(ev);
      ++stats_.events_fired;
    }
  }

  void rebuild_snapshot() {
    wire::SnapshotMsg snap;
    snap.bone_count = static_cast<std::uint8_t>(config_.rig.bones.size());
    for (const auto& [user, stream] : users_) {
      if (!stream.has_broadcast) continue;
      wire::SnapshotUser u;
      u.id = user;
      u.root[0] = static_cast<float>(stream.broadcast.root_position.x);
      u.root[1] = static_cast<float>(stream.broadcast.root_position.y);
      u.root[2] = static_cast<float>(stream.broadcast.root_position.z);
      u.bones.reserve(stream.broadcast.local_rotations.size());
      for (const UnitQuat& q : stream.broadcast.local_rotations) {
        u.bones.push_back({static_cast<float>(q.w), static_cast<float>(q.x),
                           static_cast<float>(q.y), static_cast<float>(q.z)});
      }
      snap.users.push_back(std::move(u));
    }
    for (const EntityId id : proxy_order_) {
      const ObjectPose& p = objects_.at(id).emitted;
      wire::SnapshotObject o;
      o.id = id;
      o.px = static_cast<float>(p.pose.position.x);
      o.py = static_cast<float>(p.pose.position.y);
      o.pz = static_cast<float>(p.pose.position.z);
      o.qw = static_cast<float>(p.pose.rotation.w);
      o.qx = static_cast<float>(p.pose.rotation.x);
      o.qy = static_cast<float>(p.pose.rotation.y);
      o.qz = static_cast<float>(p.pose.rotation.z);
      o.valid = p.valid ? 1 : 0;
      snap.objects.push_back(o);
    }
    snap.portal = interaction_.portal_unlocked ? 1 : 0;

    cached_snapshot_ = std::move(snap);
    wire::Message probe;
    probe.tick = current_tick_;
    probe.payload = cached_snapshot_;
    const auto bytes = wire::encode(probe);
    cached_payload_.assign(bytes.begin() + wire::kHeaderSize, bytes.end());
  }

  Outbound make_datagram(const Endpoint& to, std::uint64_t now_us, wire::Payload payload,
                         ClientRecord* rec) {
    wire::Message m;
    m.seq = rec->out_seq++;
    m.tick = current_tick_;
    m.timestamp_us = now_us;
    m.payload = std::move(payload);
    return Outbound{to, wire::encode(m)};
  }

  SessionConfig config_;
  Tick current_tick_ = 0;
  SessionStats stats_;
  std::map<Endpoint, ClientRecord> clients_;
  std::map<UserId, UserStream> users_;
  std::map<EntityId, ObjectTrack> objects_;
  std::vector<EntityId> proxy_order_;
  double stack_edge_ = 0.0;
  InteractionState interaction_;
  std::vector<WorldEvent> event_log_;
  wire::SnapshotMsg cached_snapshot_;
  std::vector<std::uint8_t> cached_payload_;
};

}  // namespace ms2
