// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// JSON and hex views of wire messages, used by the conformance vector file
// and for debugging. Floats pass through double exactly, so a JSON round
// trip preserves every encoded bit.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <ms2/core.hpp>
#include <ms2/wire.hpp>

namespace ms2::wire {

inline std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static const char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (const std::uint8_t b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

inline std::vector<std::uint8_t> from_hex(const std::string& hex) {
  const auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw ParseError("hex string has odd length");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]);
    const int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw ParseError("hex string has a non-hex character");
    bytes.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return bytes;
}

inline const char* message_type_name(std::uint8_t type) {
  switch (type) {
    case 1: return "JOIN";
    case 2: return "JOIN_ACK";
    case 3: return "HEARTBEAT";
    case 4: return "SKELETON_FRAME";
    case 5: return "OBJECT_POSE";
    case 6: return "SNAPSHOT";
    case 7: return "EVENT";
  }
  return "UNKNOWN";
}

inline nlohmann::json message_to_json(const Message& m) {
  nlohmann::json body;
  if (const auto* join = std::get_if<Join>(&m.payload)) {
    body = {{"user", join->user}};
  } else if (const auto* ack = std::get_if<JoinAck>(&m.payload)) {
    body = {{"user", ack->user}, {"tick_rate_hz", ack->tick_rate_hz}};
  } else if (std::holds_alternative<Heartbeat>(m.payload)) {
    body = nlohmann::json::object();
  } else if (const auto* sf = std::get_if<SkeletonFrameMsg>(&m.payload)) {
    nlohmann::json joints = nlohmann::json::array();
    for (const WireJoint& j : sf->joints) {
      joints.push_back({{"p", {j.px, j.py, j.pz}}, {"c", j.confidence}});
    }
    body = {{"user", sf->user}, {"joints", std::move(joints)}};
  } else if (const auto* op = std::get_if<ObjectPoseMsg>(&m.payload)) {
    body = {{"entity", op->entity},
            {"pos", {op->px, op->py, op->pz}},
            {"rot", {op->qw, op->qx, op->qy, op->qz}},
            {"reprojection_error", op->reprojection_error},
            {"valid", op->valid}};
  } else if (const auto* snap = std::get_if<SnapshotMsg>(&m.payload)) {
    nlohmann::json users = nlohmann::json::array();
    for (const SnapshotUser& u : snap->users) {
      nlohmann::json bones = nlohmann::json::array();
      for (const auto& q : u.bones) bones.push_back({q[0], q[1], q[2], q[3]});
      users.push_back({{"id", u.id},
                       {"root", {u.root[0], u.root[1], u.root[2]}},
                       {"bones", std::move(bones)}});
    }
    nlohmann::json objects = nlohmann::json::array();
    for (const SnapshotObject& o : snap->objects) {
      objects.push_back({{"id", o.id},
                         {"pos", {o.px, o.py, o.pz}},
                         {"rot", {o.qw, o.qx, o.qy, o.qz}},
                         {"valid", o.valid}});
    }
    body = {{"bone_count", snap->bone_count},
            {"users", std::move(users)},
            {"objects", std::move(objects)},
            {"portal", snap->portal}};
  } else if (const auto* ev = std::get_if<EventMsg>(&m.payload)) {
    body = {{"event_id", ev->event_id},
            {"kind", ev->kind},
            {"user", ev->user},
            {"entity", ev->entity},
            {"aux", ev->aux}};
  }
  return {{"type", message_type_name(msg_type_of(m))},
          {"seq", m.seq},
          {"tick", m.tick},
          {"timestamp_us", m.timestamp_us},
          {"body", std::move(body)}};
}

}  // namespace ms2::wire
