// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <ms2/sim.hpp>
#include "support/oracles.hpp"

namespace {

using namespace ms2;

SceneModel sim_scene() {
  return load_scene(std::string(R"({
    "name": "sim-room",
    "walkable": [[[-3,-3],[3,-3],[3,3],[-3,3]]],
    "obstacles": [],
    "spawn_points": [{"pos": [0,0,-1], "yaw_deg": 0}],
    "proxies": [
      {"physical_id": 1, "virtual_entity": 101,
       "physical_extents": [0.3,0.3,0.3], "virtual_extents": [0.3,0.3,0.3],
       "marker_size": 0.12,
       "initial_pose": {"pos": [0.78,1.45,0], "rot": [1,0,0,0]}},
      {"physical_id": 2, "virtual_entity": 102,
       "physical_extents": [0.3,0.3,0.3], "virtual_extents": [0.3,0.3,0.3],
       "marker_size": 0.12,
       "initial_pose": {"pos": [2.5,0.15,2.5], "rot": [1,0,0,0]}}
    ]
  })"));
}

std::vector<SkeletonFrame> rest_capture(const RigDefinition& rig, UserId user, int frames,
                                        const Vec3& offset) {
  std::vector<SkeletonFrame> capture;
  for (int i = 0; i < frames; ++i) {
    SkeletonFrame f = rest_frame(rig, user, static_cast<std::uint64_t>(i) * 33333);
    for (auto& j : f.joints) j.position = j.position + offset;
    capture.push_back(std::move(f));
  }
  return capture;
}

ScenarioConfig base_scenario() {
  ScenarioConfig sc;
  sc.name = "inline";
  sc.seed = 7;
  sc.duration_ticks = 120;
  sc.heartbeat_ticks = 10;
  sc.clients = {{1, ""}, {2, ""}};
  return sc;
}

SimInputs base_inputs() {
  SimInputs in;
  in.scene = sim_scene();
  in.rig = canonical_rig();
  // User 1 rests with the right hand on object 101; user 2 stands clear.
  in.client_frames.push_back(rest_capture(in.rig, 1, 30, {0, 0, 0}));
  in.client_frames.push_back(rest_capture(in.rig, 2, 30, {-1.5, 0, -1.5}));
  return in;
}

wire::SnapshotMsg decode_snapshot_payload(const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> datagram = {0x4D, 0x53, 0x32, 0x01, 0x06};
  datagram.resize(wire::kHeaderSize, 0);
  datagram.insert(datagram.end(), payload.begin(), payload.end());
  const wire::DecodeResult r = wire::decode(datagram);
  REQUIRE(std::holds_alternative<wire::Message>(r));
  return std::get<wire::SnapshotMsg>(std::get<wire::Message>(r).payload);
}

std::string stats_text(const SimResult& result) {
  std::ostringstream out;
  write_sim_stats(out, result);
  return out.str();
}

std::string events_text(const std::vector<WorldEvent>& events) {
  std::ostringstream out;
  save_event_log(out, events);
  return out.str();
}

}  // namespace

TEST_CASE("lossless simulation reaches byte-exact convergence") {
  const ScenarioConfig scenario = base_scenario();
  const SimInputs inputs = base_inputs();
  Simulation sim(scenario, inputs);
  const SimResult result = sim.run();

  CHECK(result.final_tick == 120);
  CHECK(result.server.joins == 2);
  CHECK(result.server.decode_errors == 0);
  CHECK(result.server.expired_clients == 0);

  // Resting a hand on the proxy grabs it once; nothing ever releases it.
  REQUIRE(result.event_log.size() == 1);
  CHECK(result.event_log[0].kind == EventKind::Grabbed);
  CHECK(result.event_log[0].tick == 3);
  CHECK(result.event_log[0].user == 1);
  CHECK(result.event_log[0].entity == 101);
  CHECK(result.portal_unlocked == false);

  REQUIRE(result.clients.size() == 2);
  for (const ClientReport& c : result.clients) {
    CHECK(c.converged);
    CHECK(c.ticks_monotonic);
    CHECK(c.joins_sent == 1);
    CHECK(c.last_applied_tick == 120);
    CHECK(c.stats.decode_errors == 0);
    CHECK(c.stats.stale_dropped == 0);
    CHECK(c.stats.duplicates_dropped == 0);
    // 120 ticked snapshots plus the cached one sent with the join ack.
    CHECK(c.stats.snapshots_applied == 121);
    REQUIRE(c.events.size() == 1);
    CHECK(c.events[0].event_id == 1);
    CHECK(c.events[0].kind == static_cast<std::uint8_t>(EventKind::Grabbed));
    CHECK(c.to_server.lost == 0);
    CHECK(c.from_server.lost == 0);
    CHECK(c.from_server.duplicated == 0);
  }

  const wire::SnapshotMsg snap = decode_snapshot_payload(result.final_snapshot_payload);
  REQUIRE(snap.users.size() == 2);
  CHECK(snap.users[0].id == 1);
  CHECK(snap.users[1].id == 2);
  CHECK(snap.objects.size() == 2);
}

TEST_CASE("lossy jittery links still converge and surface events exactly once") {
  ScenarioConfig scenario = base_scenario();
  scenario.seed = 99;
  scenario.duration_ticks = 400;
  // Keep the idle tail from expiring the input streams mid-run.
  scenario.client_timeout_ticks = 1000;
  scenario.channel.latency_ms = 50;
  scenario.channel.jitter_ms = 10;
  scenario.channel.loss_fraction = 0.2;
  scenario.channel.duplication_fraction = 0.1;
  const SimInputs inputs = base_inputs();
  Simulation sim(scenario, inputs);
  const SimResult result = sim.run();

  CHECK(result.final_tick == 400);
  REQUIRE(result.event_log.size() == 1);
  CHECK(result.event_log[0].kind == EventKind::Grabbed);

  for (const ClientReport& c : result.clients) {
    CHECK(c.converged);
    CHECK(c.ticks_monotonic);
    CHECK(c.stats.decode_errors == 0);
    // Retransmits and duplicates collapse to a single surfaced event.
    REQUIRE(c.events.size() == 1);
    CHECK(c.events[0].event_id == 1);
    CHECK(c.from_server.lost > 0);
    CHECK(c.from_server.duplicated > 0);
  }
}

TEST_CASE("an expired input stream drops its grab and leaves the snapshot") {
  ScenarioConfig scenario = base_scenario();
  scenario.duration_ticks = 400;
  scenario.client_timeout_ticks = 300;
  const SimInputs inputs = base_inputs();
  Simulation sim(scenario, inputs);
  const SimResult result = sim.run();

  // Captures end near tick 58; the skeleton streams expire 300 ticks later
  // and the vanished hand counts as out of range, releasing the object.
  REQUIRE(result.event_log.size() == 2);
  CHECK(result.event_log[0].kind == EventKind::Grabbed);
  CHECK(result.event_log[0].tick == 3);
  CHECK(result.event_log[1].kind == EventKind::Released);
  CHECK(result.event_log[1].tick == 360);
  CHECK(result.event_log[1].user == 1);
  CHECK(result.event_log[1].entity == 101);

  // Heartbeats keep the client connections themselves alive.
  CHECK(result.server.expired_clients == 0);
  for (const ClientReport& c : result.clients) {
    CHECK(c.converged);
    REQUIRE(c.events.size() == 2);
    CHECK(c.events[0].event_id == 1);
    CHECK(c.events[1].event_id == 2);
  }
  const wire::SnapshotMsg snap = decode_snapshot_payload(result.final_snapshot_payload);
  CHECK(snap.users.empty());
}

TEST_CASE("a scenario replays bit-identically under the same seed") {
  ScenarioConfig scenario = base_scenario();
  scenario.seed = 0xabcddcba;
  scenario.duration_ticks = 300;
  scenario.channel.latency_ms = 80;
  scenario.channel.jitter_ms = 15;
  scenario.channel.loss_fraction = 0.15;
  scenario.channel.duplication_fraction = 0.05;
  const SimInputs inputs = base_inputs();

  Simulation first(scenario, inputs);
  const SimResult a = first.run();
  Simulation second(scenario, inputs);
  const SimResult b = second.run();

  CHECK(stats_text(a) == stats_text(b));
  CHECK(events_text(a.event_log) == events_text(b.event_log));
  CHECK(a.final_snapshot_payload == b.final_snapshot_payload);

  // A different seed shifts at least the channel outcomes.
  scenario.seed = 0xabcddcbb;
  Simulation third(scenario, inputs);
  const SimResult c = third.run();
  CHECK(stats_text(a) != stats_text(c));
}

TEST_CASE("marker observations steer tracked objects through the server") {
  ScenarioConfig scenario = base_scenario();
  scenario.clients = {{1, ""}};
  scenario.duration_ticks = 60;
  scenario.trackers.push_back(ScenarioTracker{"", "", Transform{}});

  SimInputs inputs;
  inputs.scene = sim_scene();
  inputs.rig = canonical_rig();
  inputs.client_frames.push_back({});  // joined but silent client

  TrackerInput tracker;
  tracker.camera = CameraIntrinsics{300, 300, 320, 240, 640, 480};
  tracker.pose = Transform{};  // camera frame is the world frame
  const Transform marker_pose{{0.1, 0.2, 1.5}, UnitQuat{}};
  for (int i = 0; i < 10; ++i) {
    MarkerObservation obs;
    obs.marker_id = 2;  // bound to entity 102
    obs.timestamp_us = static_cast<std::uint64_t>(i) * 16667 + 1;
    obs.corners = project_marker(marker_pose, 0.12, tracker.camera);
    obs.edge = 0.12;
    tracker.observations.push_back(obs);
  }
  MarkerObservation stray;
  stray.marker_id = 77;
  stray.timestamp_us = 200000;
  stray.corners = tracker.observations[0].corners;
  stray.edge = 0.12;
  tracker.observations.push_back(stray);
  inputs.trackers.push_back(std::move(tracker));

  Simulation sim(scenario, inputs);
  const SimResult result = sim.run();

  REQUIRE(result.trackers.size() == 1);
  CHECK(result.trackers[0].observations_sent == 10);
  CHECK(result.trackers[0].estimation_failures == 0);
  CHECK(result.trackers[0].unknown_markers == 1);
  CHECK(result.server.bad_poses == 0);
  CHECK(result.server.unknown_dropped == 0);

  const wire::SnapshotMsg snap = decode_snapshot_payload(result.final_snapshot_payload);
  REQUIRE(snap.objects.size() == 2);
  CHECK(snap.objects[1].id == 102);
  CHECK(snap.objects[1].valid == 1);
  CHECK(std::abs(snap.objects[1].px - 0.1f) < 1e-3f);
  CHECK(std::abs(snap.objects[1].py - 0.2f) < 1e-3f);
  CHECK(std::abs(snap.objects[1].pz - 1.5f) < 1e-3f);
  // Object 101 never saw an observation and stays at its starting pose.
  CHECK(snap.objects[0].px == 0.78f);
}

TEST_CASE("the bundled demo scenario plays out end to end") {
  const std::filesystem::path assets(MS2_ASSETS_DIR);
  auto in = std::ifstream(assets / "demo.scenario.json");
  REQUIRE(in.good());
  const ScenarioConfig scenario = load_scenario(in);
  const SimInputs inputs = load_sim_inputs(scenario, assets);

  REQUIRE(inputs.client_frames.size() == 2);
  CHECK(inputs.client_frames[0].size() == 900);
  REQUIRE(inputs.trackers.size() == 1);
  CHECK(inputs.trackers[0].observations.size() == 3600);

  Simulation sim(scenario, inputs);
  const SimResult result = sim.run();

  CHECK(result.final_tick == 10000);
  CHECK(result.portal_unlocked);

  // One grab, one stack (portal + spawn on the same tick), one release.
  REQUIRE(result.event_log.size() == 4);
  CHECK(result.event_log[0].kind == EventKind::Grabbed);
  CHECK(result.event_log[1].kind == EventKind::PortalUnlocked);
  CHECK(result.event_log[2].kind == EventKind::TRexSpawned);
  CHECK(result.event_log[3].kind == EventKind::Released);
  CHECK(result.event_log[1].tick == result.event_log[2].tick);
  CHECK(result.event_log[0].user == 1);
  CHECK(result.event_log[0].entity == 101);

  for (const ClientReport& c : result.clients) {
    CHECK(c.converged);
    CHECK(c.ticks_monotonic);
    CHECK(c.stats.decode_errors == 0);
    REQUIRE(c.events.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(c.events[i].event_id == i + 1);
      CHECK(c.events[i].kind == static_cast<std::uint8_t>(result.event_log[i].kind));
    }
    CHECK(c.from_server.lost > 0);  // the 10% loss channel really dropped traffic
  }

  // The stacked cube rests one edge above its neighbour's marker.
  const wire::SnapshotMsg snap = decode_snapshot_payload(result.final_snapshot_payload);
  REQUIRE(snap.objects.size() == 2);
  CHECK(std::abs(snap.objects[0].px - 1.2f) < 5e-3f);
  CHECK(std::abs(snap.objects[0].py - 1.5f) < 5e-3f);
  CHECK(std::abs(snap.objects[1].py - 1.2f) < 5e-3f);
  CHECK(snap.users.size() == 2);
}

TEST_CASE("scenario documents parse with defaults and reject bad input") {
  const std::string good = R"({
    "name": "demo", "seed": 42, "duration_ticks": 100,
    "channel": {"latency_ms": 100, "jitter_ms": 20,
                "loss_fraction": 0.1, "duplication_fraction": 0},
    "scene": "scene.json", "rig": "rig.json",
    "clients": [{"user": 1, "skeleton_capture": "a.jsonl"},
                {"user": 2, "skeleton_capture": "b.jsonl"}],
    "trackers": [{"camera": "cam.json", "observations": "obs.jsonl",
                  "pose": {"pos": [0,3,0.8], "rot": [1,0,0,0]}}]
  })";
  const ScenarioConfig sc = load_scenario(good);
  CHECK(sc.name == "demo");
  CHECK(sc.seed == 42);
  CHECK(sc.duration_ticks == 100);
  CHECK(sc.tick_rate_hz == 60);
  CHECK(sc.skeleton_input_hz == 30);
  CHECK(sc.client_timeout_ticks == 300);
  CHECK(sc.interpolation_delay_ticks == 2);
  CHECK(sc.heartbeat_ticks == 10);
  CHECK(sc.channel.latency_ms == 100.0);
  CHECK(sc.channel.loss_fraction == 0.1);
  REQUIRE(sc.clients.size() == 2);
  CHECK(sc.clients[1].user == 2);
  CHECK(sc.clients[1].skeleton_capture == "b.jsonl");
  REQUIRE(sc.trackers.size() == 1);
  CHECK(sc.trackers[0].pose.position.y == 3.0);

  auto with = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(load_scenario(with("\"duration_ticks\": 100", "\"duration_ticks\": 0")),
                  ValidationError);
  CHECK_THROWS_AS(load_scenario(with("\"user\": 2", "\"user\": 1")), ValidationError);
  CHECK_THROWS_AS(load_scenario(with("\"loss_fraction\": 0.1", "\"loss_fraction\": 1.0")),
                  ValidationError);
  CHECK_THROWS_AS(load_scenario(with("\"rot\": [1,0,0,0]", "\"rot\": [1,1,0,0]")),
                  ValidationError);
  CHECK_THROWS_AS(load_scenario(with("\"seed\": 42,", "")), ParseError);
  CHECK_THROWS_AS(load_scenario(std::string("nonsense")), ParseError);
}
