// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0

// Loopback smoke tests for the datagram transport. Timing-sensitive, so the
// assertions stay coarse: datagrams flow, types are right, shutdown is clean.

#include <atomic>
#include <chrono>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <ms2/udp.hpp>
#include "support/oracles.hpp"

namespace {

using namespace ms2;

SceneModel loopback_scene() {
  return load_scene(std::string(R"({
    "name": "loopback",
    "walkable": [[[-3,-3],[3,-3],[3,3],[-3,3]]],
    "obstacles": [],
    "spawn_points": [{"pos": [0,0,-1], "yaw_deg": 0}],
    "proxies": []
  })"));
}

}  // namespace

TEST_CASE("endpoint strings parse and round-trip") {
  const sockaddr_in sa = udp::parse_endpoint("127.0.0.1:7777");
  CHECK(udp::endpoint_name(sa) == "127.0.0.1:7777");
  CHECK(udp::endpoint_name(udp::parse_endpoint(":80")) == "0.0.0.0:80");

  CHECK_THROWS_AS(udp::parse_endpoint("no-port"), ValidationError);
  CHECK_THROWS_AS(udp::parse_endpoint("127.0.0.1:"), ValidationError);
  CHECK_THROWS_AS(udp::parse_endpoint("127.0.0.1:999999"), ValidationError);
  CHECK_THROWS_AS(udp::parse_endpoint("localhost:80"), ValidationError);
  CHECK_THROWS_AS(udp::parse_endpoint("127.0.0.1:7x"), ValidationError);
}

TEST_CASE("serve loop answers a join over loopback and stops on request") {
  SessionConfig config;
  config.scene = loopback_scene();
  config.rig = canonical_rig();
  ServerCore server{config};

  udp::Socket server_sock("127.0.0.1:0");
  const std::string server_addr = server_sock.local_name();

  std::atomic<bool> stop{false};
  std::thread loop([&] { udp::serve(server, server_sock, stop, 1200); });

  udp::Socket client;
  wire::Message join;
  join.seq = 1;
  join.payload = wire::Join{7};
  client.send(server_addr, wire::encode(join));

  bool saw_ack = false;
  int snapshots = 0;
  // A join is answered immediately with an ack plus the cached snapshot; a
  // second snapshot can only come from a tick broadcast.
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while ((!saw_ack || snapshots < 2) && std::chrono::steady_clock::now() < deadline) {
    auto got = client.receive(200);
    if (!got) continue;
    const wire::DecodeResult r = wire::decode(got->first);
    REQUIRE(std::holds_alternative<wire::Message>(r));
    const auto& m = std::get<wire::Message>(r);
    if (const auto* ack = std::get_if<wire::JoinAck>(&m.payload)) {
      CHECK(ack->user == 7);
      CHECK(ack->tick_rate_hz == 60);
      saw_ack = true;
    } else if (std::holds_alternative<wire::SnapshotMsg>(m.payload)) {
      ++snapshots;
    }
  }
  stop.store(true);
  loop.join();

  CHECK(saw_ack);
  CHECK(snapshots >= 2);
  CHECK(server.stats().joins == 1);
  CHECK(server.client_count() == 1);
  CHECK(server.current_tick() >= 1);
}

TEST_CASE("serve loop runs a bounded tick count with no traffic") {
  SessionConfig config;
  config.scene = loopback_scene();
  config.rig = canonical_rig();
  config.tick_rate_hz = 240;  // keep the wall-clock cost of 24 ticks small
  ServerCore server{config};

  udp::Socket sock("127.0.0.1:0");
  std::atomic<bool> stop{false};
  const std::uint64_t ticks = udp::serve(server, sock, stop, 24);
  CHECK(ticks == 24);
  CHECK(server.current_tick() == 24);
  CHECK(server.stats().datagrams_out == 0);
}
