// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic in-process simulation: one server, N clients, M marker
// trackers, every link a seeded lossy channel. Time is integer microseconds;
// all parties run in one scheduler loop in a fixed canonical order, so a
// given scenario file and seed reproduce bit-identical logs.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <ms2/client.hpp>
#include <ms2/core.hpp>
#include <ms2/io.hpp>
#include <ms2/marker.hpp>
#include <ms2/scene.hpp>
#include <ms2/server.hpp>
#include <ms2/wire.hpp>

namespace ms2 {

struct ScenarioClient {
  UserId user = 0;
  std::string skeleton_capture;  // path, relative to the scenario file
};

struct ScenarioTracker {
  std::string camera;        // intrinsics document path
  std::string observations;  // observation capture path
  Transform pose;            // camera-to-world extrinsics
};

struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 0;
  std::uint32_t duration_ticks = 0;
  std::uint32_t tick_rate_hz = 60;
  std::uint32_t skeleton_input_hz = 30;
  std::uint32_t client_timeout_ticks = 300;
  std::uint32_t interpolation_delay_ticks = 2;
  std::uint32_t heartbeat_ticks = 10;
  ChannelConfig channel;  // rng_seed ignored; per-link seeds derive from `seed`
  std::string scene;
  std::string rig;
  std::vector<ScenarioClient> clients;
  std::vector<ScenarioTracker> trackers;
};

inline ScenarioConfig load_scenario(std::istream& source) {
  const nlohmann::json doc = detail::parse_document(source, "scenario document");
  if (!doc.is_object()) throw ParseError("scenario document root must be an object");
  ScenarioConfig sc;
  try {
    sc.name = doc.value("name", std::string{});
    sc.seed = doc.at("seed").get<std::uint64_t>();
    sc.duration_ticks = doc.at("duration_ticks").get<std::uint32_t>();
    sc.tick_rate_hz = doc.value("tick_rate_hz", 60u);
    sc.skeleton_input_hz = doc.value("skeleton_input_hz", 30u);
    sc.client_timeout_ticks = doc.value("client_timeout_ticks", 300u);
    sc.interpolation_delay_ticks = doc.value("interpolation_delay_ticks", 2u);
    sc.heartbeat_ticks = doc.value("heartbeat_ticks", 10u);
    const auto& ch = doc.at("channel");
    sc.channel.latency_ms = ch.at("latency_ms").get<double>();
    sc.channel.jitter_ms = ch.at("jitter_ms").get<double>();
    sc.channel.loss_fraction = ch.at("loss_fraction").get<double>();
    sc.channel.duplication_fraction = ch.at("duplication_fraction").get<double>();
    sc.scene = doc.at("scene").get<std::string>();
    sc.rig = doc.at("rig").get<std::string>();
    for (const auto& jc : doc.at("clients")) {
      sc.clients.push_back(ScenarioClient{jc.at("user").get<UserId>(),
                                          jc.at("skeleton_capture").get<std::string>()});
    }
    if (doc.contains("trackers")) {
      for (const auto& jt : doc.at("trackers")) {
        ScenarioTracker t;
        t.camera = jt.at("camera").get<std::string>();
        t.observations = jt.at("observations").get<std::string>();
        const auto& jp = jt.at("pose");
        t.pose.position = detail::vec3_from_array(jp.at("pos"), "trackers.pose.pos");
        t.pose.rotation = detail::quat_from_array(jp.at("rot"), "trackers.pose.rot");
        if (!t.pose.rotation.finite() || std::abs(t.pose.rotation.norm() - 1.0) > 1e-3) {
          throw ValidationError("tracker pose rot is not a unit quaternion");
        }
        sc.trackers.push_back(std::move(t));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario document malformed: ") + e.what());
  }
  validate_channel_config(sc.channel);
  if (sc.duration_ticks == 0) throw ValidationError("scenario duration_ticks must be positive");
  if (sc.tick_rate_hz == 0) throw ValidationError("scenario tick_rate_hz must be positive");
  if (sc.heartbeat_ticks == 0) throw ValidationError("scenario heartbeat_ticks must be positive");
  if (sc.clients.empty()) throw ValidationError("scenario lists no clients");
  for (std::size_t i = 0; i < sc.clients.size(); ++i) {
    for (std::size_t j = i + 1; j < sc.clients.size(); ++j) {
      if (sc.clients[i].user == sc.clients[j].user) {
        throw ValidationError("scenario lists duplicate client user ids");
      }
    }
  }
  return sc;
}

inline ScenarioConfig load_scenario(const std::string& text) {
  std::istringstream in(text);
  return load_scenario(in);
}

// Pre-loaded scenario resources (the CLI resolves the paths).
struct TrackerInput {
  CameraIntrinsics camera;
  Transform pose;  // camera to world
  std::vector<MarkerObservation> observations;
};

struct SimInputs {
  SceneModel scene;
  RigDefinition rig;
  std::vector<std::vector<SkeletonFrame>> client_frames;  // parallel to scenario clients
  std::vector<TrackerInput> trackers;                     // parallel to scenario trackers
};

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace detail

// Loads every file a scenario references; relative paths resolve against
// base_dir (conventionally the scenario file's own directory).
inline SimInputs load_sim_inputs(const ScenarioConfig& scenario,
                                 const std::filesystem::path& base_dir) {
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  SimInputs inputs;
  {
    auto in = detail::open_input(resolve(scenario.scene));
    inputs.scene = load_scene(in);
  }
  {
    auto in = detail::open_input(resolve(scenario.rig));
    inputs.rig = load_rig(in);
  }
  for (const ScenarioClient& c : scenario.clients) {
    auto in = detail::open_input(resolve(c.skeleton_capture));
    inputs.client_frames.push_back(load_skeleton_capture(in));
  }
  for (const ScenarioTracker& t : scenario.trackers) {
    TrackerInput tracker;
    {
      auto in = detail::open_input(resolve(t.camera));
      tracker.camera = load_camera(in);
    }
    {
      auto in = detail::open_input(resolve(t.observations));
      tracker.observations = load_observation_capture(in);
    }
    tracker.pose = t.pose;
    inputs.trackers.push_back(std::move(tracker));
  }
  return inputs;
}

struct ClientReport {
  UserId user = 0;
  ClientStats stats;
  ChannelStats to_server;
  ChannelStats from_server;
  std::vector<wire::EventMsg> events;  // surfaced, in id order
  std::uint64_t joins_sent = 0;
  std::uint64_t heartbeats_sent = 0;
  Tick last_applied_tick = 0;
  bool ticks_monotonic = true;
  bool converged = false;
};

struct TrackerReport {
  std::uint64_t observations_sent = 0;
  std::uint64_t estimation_failures = 0;  // degenerate / behind-camera inputs
  std::uint64_t unknown_markers = 0;
};

struct SimResult {
  SessionStats server;
  Tick final_tick = 0;
  bool portal_unlocked = false;
  std::vector<WorldEvent> event_log;
  std::vector<std::uint8_t> final_snapshot_payload;
  std::vector<ClientReport> clients;
  std::vector<TrackerReport> trackers;
  double mean_tick_ms = 0.0;  // wall-clock; never serialized (would break determinism)
};

class Simulation {
 public:
  Simulation(const ScenarioConfig& scenario, const SimInputs& inputs)
      : scenario_(scenario), inputs_(inputs) {
    SessionConfig session;
    session.tick_rate_hz = scenario.tick_rate_hz;
    session.skeleton_input_hz = scenario.skeleton_input_hz;
    session.client_timeout_ticks = scenario.client_timeout_ticks;
    session.interpolation_delay_ticks = scenario.interpolation_delay_ticks;
    session.scene = inputs.scene;
    session.rig = inputs.rig;
    server_.emplace(std::move(session));

    if (inputs.client_frames.size() != scenario.clients.size()) {
      throw ValidationError("client capture count does not match scenario client list");
    }
    if (inputs.trackers.size() != scenario.trackers.size()) {
      throw ValidationError("tracker input count does not match scenario tracker list");
    }

    for (std::size_t i = 0; i < scenario.clients.size(); ++i) {
      const UserId user = scenario.clients[i].user;
      Party party;
      party.user = user;
      party.endpoint = "client:" + std::to_string(user);
      party.world.emplace(user, server_->config().rig, scenario.interpolation_delay_ticks);
      party.to_server.emplace(link_config(2 * i));
      party.from_server.emplace(link_config(2 * i + 1));
      party.frames = &inputs.client_frames[i];
      parties_.push_back(std::move(party));
    }
    for (std::size_t j = 0; j < inputs.trackers.size(); ++j) {
      Tracker tracker;
      tracker.endpoint = "tracker:" + std::to_string(j);
      tracker.to_server.emplace(link_config(1000 + j));
      tracker.input = &inputs.trackers[j];
      trackers_.push_back(std::move(tracker));
    }
    for (const ProxyBinding& proxy : inputs.scene.proxies) {
      marker_to_entity_[proxy.physical_id] = proxy.virtual_entity;
    }
  }

  SimResult run() {
    const std::uint64_t tick_period_us = 1000000ull / scenario_.tick_rate_hz;
    std::chrono::steady_clock::duration tick_time{};

    for (Tick t = 1; t <= scenario_.duration_ticks; ++t) {
      const std::uint64_t now =
          static_cast<std::uint64_t>(t) * 1000000ull / scenario_.tick_rate_hz;

      // 1. Scripted sends: joins, capture frames, heartbeats, observations.
      for (Party& p : parties_) {
        if (!p.world->joined() && now >= p.next_join_us) {
          submit_from(p, wire::Join{p.user}, now, 0);
          p.next_join_us = now + kJoinRetryUs;
          ++p.joins_sent;
        }
        while (p.next_frame < p.frames->size() &&
               (*p.frames)[p.next_frame].timestamp_us <= now) {
          submit_from(p, to_wire_frame((*p.frames)[p.next_frame]),
                      (*p.frames)[p.next_frame].timestamp_us, 0);
          ++p.next_frame;
        }
        if (p.world->joined() && t % scenario_.heartbeat_ticks == 0) {
          submit_from(p, wire::Heartbeat{}, now, p.world->event_ack());
          ++p.heartbeats_sent;
        }
      }
      for (Tracker& tr : trackers_) {
        while (tr.next_obs < tr.input->observations.size() &&
               tr.input->observations[tr.next_obs].timestamp_us <= now) {
          send_observation(tr, tr.input->observations[tr.next_obs]);
          ++tr.next_obs;
        }
      }

      // 2. Deliver inbound traffic to the server.
      deliver_to_server(now);

      // 3. Advance the authoritative state.
      const auto t0 = std::chrono::steady_clock::now();
      route_outbound(server_->tick(now), now);
      tick_time += std::chrono::steady_clock::now() - t0;

      // 4. Deliver server traffic to the clients and sample the render poses.
      for (Party& p : parties_) {
        deliver_to_client(p, now);
        if (const auto rt = p.world->render_tick()) p.world->sample(*rt);
      }
    }

    // Drain everything still in flight; the server no longer ticks.
    std::uint64_t now =
        static_cast<std::uint64_t>(scenario_.duration_ticks) * 1000000ull / scenario_.tick_rate_hz;
    for (int guard = 0; guard < 100000 && in_flight() > 0; ++guard) {
      now += tick_period_us;
      deliver_to_server(now);
      for (Party& p : parties_) deliver_to_client(p, now);
    }

    return make_result(tick_time);
  }

 private:
  static constexpr std::uint64_t kJoinRetryUs = 500000;

  struct Party {
    UserId user = 0;
    Endpoint endpoint;
    std::optional<ClientWorld> world;
    std::optional<Channel> to_server;
    std::optional<Channel> from_server;
    const std::vector<SkeletonFrame>* frames = nullptr;
    std::size_t next_frame = 0;
    std::uint64_t next_join_us = 0;
    std::uint64_t joins_sent = 0;
    std::uint64_t heartbeats_sent = 0;
    std::vector<wire::EventMsg> surfaced;
    std::optional<Tick> last_newest;
    bool ticks_monotonic = true;
  };

  struct Tracker {
    Endpoint endpoint;
    std::optional<Channel> to_server;
    const TrackerInput* input = nullptr;
    std::size_t next_obs = 0;
    std::uint32_t seq = 1;
    TrackerReport report;
  };

  ChannelConfig link_config(std::size_t index) const {
    ChannelConfig c = scenario_.channel;
    c.rng_seed = detail::mix_seed(scenario_.seed, index);
    return c;
  }

  static wire::SkeletonFrameMsg to_wire_frame(const SkeletonFrame& f) {
    wire::SkeletonFrameMsg msg;
    msg.user = f.user;
    for (std::size_t i = 0; i < kJointCount; ++i) {
      msg.joints[i].px = static_cast<float>(f.joints[i].position.x);
      msg.joints[i].py = static_cast<float>(f.joints[i].position.y);
      msg.joints[i].pz = static_cast<float>(f.joints[i].position.z);
      msg.joints[i].confidence = static_cast<std::uint8_t>(f.joints[i].confidence);
    }
    return msg;
  }

  void submit_from(Party& p, wire::Payload payload, std::uint64_t timestamp_us,
                   std::uint32_t header_tick) {
    wire::Message m;
    m.seq = p.world->next_seq();
    m.tick = header_tick;
    m.timestamp_us = timestamp_us;
    m.payload = std::move(payload);
    p.to_server->submit(wire::encode(m), timestamp_us);
  }

  void send_observation(Tracker& tr, const MarkerObservation& obs) {
    const auto entity_it = marker_to_entity_.find(obs.marker_id);
    if (entity_it == marker_to_entity_.end()) {
      ++tr.report.unknown_markers;
      return;
    }
    ObjectPose in_camera;
    try {
      in_camera = pose_from_marker(obs, tr.input->camera);
    } catch (const Error&) {
      ++tr.report.estimation_failures;
      return;
    }
    const Transform world_pose = transform_compose(tr.input->pose, in_camera.pose);

    wire::ObjectPoseMsg msg;
    msg.entity = entity_it->second;
    msg.px = static_cast<float>(world_pose.position.x);
    msg.py = static_cast<float>(world_pose.position.y);
    msg.pz = static_cast<float>(world_pose.position.z);
    msg.qw = static_cast<float>(world_pose.rotation.w);
    msg.qx = static_cast<float>(world_pose.rotation.x);
    msg.qy = static_cast<float>(world_pose.rotation.y);
    msg.qz = static_cast<float>(world_pose.rotation.z);
    msg.reprojection_error = static_cast<float>(in_camera.reprojection_error);
    msg.valid = in_camera.valid ? 1 : 0;

    wire::Message m;
    m.seq = tr.seq++;
    m.tick = 0;
    m.timestamp_us = obs.timestamp_us;
    m.payload = msg;
    tr.to_server->submit(wire::encode(m), obs.timestamp_us);
    ++tr.report.observations_sent;
  }

  void deliver_to_server(std::uint64_t now) {
    for (Party& p : parties_) {
      for (auto& datagram : p.to_server->poll(now)) {
        route_outbound(server_->ingest(datagram, p.endpoint, now), now);
      }
    }
    for (Tracker& tr : trackers_) {
      for (auto& datagram : tr.to_server->poll(now)) {
        route_outbound(server_->ingest(datagram, tr.endpoint, now), now);
      }
    }
  }

  void route_outbound(const std::vector<Outbound>& outbound, std::uint64_t now) {
    for (const Outbound& o : outbound) {
      for (Party& p : parties_) {
        if (p.endpoint == o.to) {
          p.from_server->submit(o.datagram, now);
          break;
        }
      }
    }
  }

  void deliver_to_client(Party& p, std::uint64_t now) {
    for (auto& datagram : p.from_server->poll(now)) {
      auto events = p.world->on_datagram(datagram);
      p.surfaced.insert(p.surfaced.end(), events.begin(), events.end());
      const auto newest = p.world->newest_tick();
      if (newest && p.last_newest && *newest < *p.last_newest) p.ticks_monotonic = false;
      if (newest) p.last_newest = newest;
    }
  }

  std::size_t in_flight() const {
    std::size_t n = 0;
    for (const Party& p : parties_) n += p.to_server->pending() + p.from_server->pending();
    for (const Tracker& tr : trackers_) n += tr.to_server->pending();
    return n;
  }

  SimResult make_result(std::chrono::steady_clock::duration tick_time) const {
    SimResult result;
    result.server = server_->stats();
    result.final_tick = server_->current_tick();
    result.portal_unlocked = server_->portal_unlocked();
    result.event_log = server_->event_log();
    result.final_snapshot_payload = server_->cached_snapshot_payload();
    result.mean_tick_ms =
        scenario_.duration_ticks == 0
            ? 0.0
            : std::chrono::duration<double, std::milli>(tick_time).count() / scenario_.duration_ticks;
    for (const Party& p : parties_) {
      ClientReport report;
      report.user = p.user;
      report.stats = p.world->stats();
      report.to_server = p.to_server->stats();
      report.from_server = p.from_server->stats();
      report.events = p.surfaced;
      report.joins_sent = p.joins_sent;
      report.heartbeats_sent = p.heartbeats_sent;
      report.last_applied_tick = p.last_newest.value_or(0);
      report.ticks_monotonic = p.ticks_monotonic;
      report.converged =
          p.world->newest_snapshot_payload() == server_->cached_snapshot_payload();
      result.clients.push_back(std::move(report));
    }
    for (const Tracker& tr : trackers_) result.trackers.push_back(tr.report);
    return result;
  }

  ScenarioConfig scenario_;
  const SimInputs& inputs_;
  std::optional<ServerCore> server_;
  std::vector<Party> parties_;
  std::vector<Tracker> trackers_;
  std::map<EntityId, EntityId> marker_to_entity_;
};

// Serializes the deterministic part of a result as one JSON object per line.
// Wall-clock timing is deliberately not included.
inline void write_sim_stats(std::ostream& out, const SimResult& result) {
  nlohmann::json server{{"scope", "server"},
                        {"ticks", result.server.ticks},
                        {"datagrams_in", result.server.datagrams_in},
                        {"datagrams_out", result.server.datagrams_out},
                        {"joins", result.server.joins},
                        {"stale_dropped", result.server.stale_dropped},
                        {"decode_errors", result.server.decode_errors},
                        {"unknown_dropped", result.server.unknown_dropped},
                        {"bad_frames", result.server.bad_frames},
                        {"bad_poses", result.server.bad_poses},
                        {"expired_clients", result.server.expired_clients},
                        {"events_fired", result.server.events_fired},
                        {"final_tick", result.final_tick},
                        {"portal_unlocked", result.portal_unlocked}};
  out << server.dump() << '\n';

  for (const ClientReport& c : result.clients) {
    std::map<std::string, int> event_counts;
    for (const wire::EventMsg& ev : c.events) {
      if (ev.kind >= 1 && ev.kind <= 4) {
        ++event_counts[event_kind_name(static_cast<EventKind>(ev.kind))];
      }
    }
    auto channel_json = [](const ChannelStats& s) {
      return nlohmann::json{{"submitted", s.submitted},
                            {"delivered", s.delivered},
                            {"lost", s.lost},
                            {"duplicated", s.duplicated},
                            {"mean_delay_us", s.delivered == 0 ? 0 : s.total_delay_us / s.delivered}};
    };
    nlohmann::json line{{"scope", "client"},
                        {"user", c.user},
                        {"snapshots_applied", c.stats.snapshots_applied},
                        {"stale_dropped", c.stats.stale_dropped},
                        {"duplicates_dropped", c.stats.duplicates_dropped},
                        {"decode_errors", c.stats.decode_errors},
                        {"events_surfaced", c.stats.events_surfaced},
                        {"event_counts", event_counts},
                        {"joins_sent", c.joins_sent},
                        {"heartbeats_sent", c.heartbeats_sent},
                        {"last_applied_tick", c.last_applied_tick},
                        {"ticks_monotonic", c.ticks_monotonic},
                        {"converged", c.converged},
                        {"to_server", channel_json(c.to_server)},
                        {"from_server", channel_json(c.from_server)}};
    out << line.dump() << '\n';
  }
  for (std::size_t j = 0; j < result.trackers.size(); ++j) {
    const TrackerReport& tr = result.trackers[j];
    out << nlohmann::json{{"scope", "tracker"},
                          {"index", j},
                          {"observations_sent", tr.observations_sent},
                          {"estimation_failures", tr.estimation_failures},
                          {"unknown_markers", tr.unknown_markers}}
               .dump()
        << '\n';
  }
}

}  // namespace ms2
