// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <fstream>
#include <cctype>
#include <set>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <ms2/wire.hpp>
#include <ms2/wire_json.hpp>
#include "support/oracles.hpp"

namespace {

using namespace ms2::wire;

std::vector<std::uint8_t> spaced_hex(const std::string& hex) {
  std::vector<std::uint8_t> out;
  std::string compact;
  for (char c : hex) {
    if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
  }
  REQUIRE(compact.size() % 2 == 0);
  for (std::size_t i = 0; i < compact.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoul(compact.substr(i, 2), nullptr, 16)));
  }
  return out;
}

Message msg(ms2::Seq seq, ms2::Tick tick, std::uint64_t ts, Payload p) {
  Message m;
  m.seq = seq;
  m.tick = tick;
  m.timestamp_us = ts;
  m.payload = std::move(p);
  return m;
}

const Message& expect_message(const DecodeResult& r) {
  REQUIRE(std::holds_alternative<Message>(r));
  return std::get<Message>(r);
}

DecodeError expect_error(const DecodeResult& r) {
  REQUIRE(std::holds_alternative<DecodeError>(r));
  return std::get<DecodeError>(r);
}

float rnd_f(oracle::Rng& rng) { return static_cast<float>(rng.uniform(-1000.0, 1000.0)); }

SkeletonFrameMsg random_skeleton(oracle::Rng& rng) {
  SkeletonFrameMsg f;
  f.user = rng.u32();
  for (WireJoint& j : f.joints) {
    j.px = rnd_f(rng);
    j.py = rnd_f(rng);
    j.pz = rnd_f(rng);
    j.confidence = static_cast<std::uint8_t>(rng.u32() % 3);
  }
  return f;
}

ObjectPoseMsg random_object_pose(oracle::Rng& rng) {
  ObjectPoseMsg o;
  o.entity = rng.u32();
  o.px = rnd_f(rng);
  o.py = rnd_f(rng);
  o.pz = rnd_f(rng);
  o.qw = rnd_f(rng);
  o.qx = rnd_f(rng);
  o.qy = rnd_f(rng);
  o.qz = rnd_f(rng);
  o.reprojection_error = rnd_f(rng);
  o.valid = static_cast<std::uint8_t>(rng.u32() % 2);
  return o;
}

SnapshotMsg random_snapshot(oracle::Rng& rng, std::size_t max_users = 3,
                            std::size_t max_bones = 25) {
  SnapshotMsg s;
  s.bone_count = static_cast<std::uint8_t>(rng.u32() % (max_bones + 1));
  s.users.resize(rng.u32() % (max_users + 1));
  for (auto& u : s.users) {
    u.id = rng.u32();
    for (float& f : u.root) f = rnd_f(rng);
    u.bones.resize(s.bone_count);
    for (auto& q : u.bones) {
      for (float& f : q) f = rnd_f(rng);
    }
  }
  s.objects.resize(rng.u32() % 4);
  for (auto& o : s.objects) {
    o.id = rng.u32();
    o.px = rnd_f(rng);
    o.py = rnd_f(rng);
    o.pz = rnd_f(rng);
    o.qw = rnd_f(rng);
    o.qx = rnd_f(rng);
    o.qy = rnd_f(rng);
    o.qz = rnd_f(rng);
    o.valid = static_cast<std::uint8_t>(rng.u32() % 2);
  }
  s.portal = static_cast<std::uint8_t>(rng.u32() % 2);
  return s;
}

EventMsg random_event(oracle::Rng& rng) {
  return {rng.u32(), static_cast<std::uint8_t>(1 + rng.u32() % 4), rng.u32(), rng.u32(), rng.u32()};
}

Message random_message(oracle::Rng& rng, int type) {
  Message m;
  m.seq = rng.u32();
  m.tick = rng.u32();
  m.timestamp_us = rng.u64();
  switch (type) {
    case 1: m.payload = Join{rng.u32()}; break;
    case 2: m.payload = JoinAck{rng.u32(), rng.u32()}; break;
    case 3: m.payload = Heartbeat{}; break;
    case 4: m.payload = random_skeleton(rng); break;
    case 5: m.payload = random_object_pose(rng); break;
    case 6: m.payload = random_snapshot(rng); break;
    case 7: m.payload = random_event(rng); break;
  }
  return m;
}

}  // namespace

TEST_CASE("heartbeat golden bytes") {
  const auto bytes = encode(msg(0, 0, 0, Heartbeat{}));
  const auto expect = spaced_hex("4D 53 32 01 03 00000000 00000000 0000000000000000");
  REQUIRE(bytes.size() == 21);
  CHECK(bytes == expect);
  CHECK(expect_message(decode(bytes)) == msg(0, 0, 0, Heartbeat{}));
}

TEST_CASE("golden vectors pin the byte layout") {
  SECTION("join") {
    const auto m = msg(1, 2, 3, Join{7});
    CHECK(encode(m) == spaced_hex("4D 53 32 01 01 01000000 02000000 0300000000000000 07000000"));
    CHECK(expect_message(decode(encode(m))) == m);
  }

  SECTION("join ack") {
    const auto m = msg(1, 0, 0, JoinAck{7, 60});
    CHECK(encode(m) == spaced_hex("4D 53 32 01 02 01000000 00000000 0000000000000000"
                                "07000000 3C000000"));
  }

  SECTION("event") {
    const auto m = msg(4, 100, 5, EventMsg{1, 3, 2, 101, 1});
    CHECK(encode(m) ==
          spaced_hex("4D 53 32 01 07 04000000 64000000 0500000000000000"
                   "01000000 03 02000000 65000000 01000000"));
  }

  SECTION("object pose") {
    ObjectPoseMsg o;
    o.entity = 101;
    o.px = 0.5f;
    o.py = 1.0f;
    o.pz = -1.0f;
    o.qw = 1.0f;
    o.qx = 0.0f;
    o.qy = 0.0f;
    o.qz = 0.0f;
    o.reprojection_error = 0.25f;
    o.valid = 1;
    const auto m = msg(9, 8, 7, o);
    CHECK(encode(m) ==
          spaced_hex("4D 53 32 01 05 09000000 08000000 0700000000000000"
                   "65000000"
                   "0000003F 0000803F 000080BF"
                   "0000803F 00000000 00000000 00000000"
                   "0000803E 01"));
  }

  SECTION("snapshot") {
    SnapshotMsg s;
    s.bone_count = 1;
    s.users.resize(1);
    s.users[0].id = 2;
    s.users[0].root[0] = 0.0f;
    s.users[0].root[1] = 1.0f;
    s.users[0].root[2] = 0.0f;
    s.users[0].bones = {{1.0f, 0.0f, 0.0f, 0.0f}};
    s.objects.resize(1);
    s.objects[0].id = 101;
    s.objects[0].px = 0.5f;
    s.objects[0].qw = 1.0f;
    s.objects[0].valid = 1;
    s.portal = 1;
    const auto m = msg(5, 9, 1, s);
    CHECK(encode(m) ==
          spaced_hex("4D 53 32 01 06 05000000 09000000 0100000000000000"
                   "01 01 01"
                   "02000000 00000000 0000803F 00000000 0000803F 00000000 00000000 00000000"
                   "65000000 0000003F 00000000 00000000 0000803F 00000000 00000000 00000000 01"
                   "01"));
    CHECK(expect_message(decode(encode(m))) == m);
  }

  SECTION("skeleton frame layout offsets") {
    oracle::Rng rng(0x5ce1e701u);
    const SkeletonFrameMsg f = random_skeleton(rng);
    const auto bytes = encode(msg(1, 2, 3, f));
    REQUIRE(bytes.size() == 21 + 4 + 25 * 13);
    CHECK(bytes[4] == 4);
    // user id, little-endian, at offset 21
    CHECK((bytes[21] | bytes[22] << 8 | bytes[23] << 16 |
           static_cast<std::uint32_t>(bytes[24]) << 24) == f.user);
    // joint i position x at 25 + 13*i, confidence at 25 + 13*i + 12
    for (int i = 0; i < 25; ++i) {
      const std::size_t base = 25 + 13 * static_cast<std::size_t>(i);
      const std::uint32_t px_bits = bytes[base] | bytes[base + 1] << 8 | bytes[base + 2] << 16 |
                                    static_cast<std::uint32_t>(bytes[base + 3]) << 24;
      CHECK(px_bits == std::bit_cast<std::uint32_t>(f.joints[i].px));
      CHECK(bytes[base + 12] == f.joints[i].confidence);
    }
  }
}

TEST_CASE("decode rejects malformed headers") {
  const auto valid = encode(msg(0, 0, 0, Heartbeat{}));

  SECTION("short buffer") {
    std::vector<std::uint8_t> short20(valid.begin(), valid.begin() + 20);
    CHECK(expect_error(decode(short20)) == DecodeError::Truncated);
    CHECK(expect_error(decode(nullptr, 0)) == DecodeError::Truncated);
  }

  SECTION("bad magic") {
    auto b = valid;
    b[0] = 0x4E;
    CHECK(expect_error(decode(b)) == DecodeError::BadMagic);
  }

  SECTION("bad version") {
    auto b = valid;
    b[3] = 2;
    CHECK(expect_error(decode(b)) == DecodeError::BadVersion);
  }

  SECTION("unknown type") {
    auto b = valid;
    b[4] = 99;
    CHECK(expect_error(decode(b)) == DecodeError::UnknownType);
    b[4] = 0;
    CHECK(expect_error(decode(b)) == DecodeError::UnknownType);
  }

  SECTION("trailing bytes") {
    auto b = encode(msg(1, 2, 3, Join{7}));
    b.push_back(0x00);
    CHECK(expect_error(decode(b)) == DecodeError::Truncated);
  }

  SECTION("payload truncation at every length") {
    oracle::Rng rng(0xbadc0deu);
    const auto full = encode(msg(1, 2, 3, random_snapshot(rng, 2, 5)));
    for (std::size_t len = 0; len < full.size(); ++len) {
      std::vector<std::uint8_t> cut(full.begin(), full.begin() + len);
      const auto r = decode(cut);
      REQUIRE(std::holds_alternative<DecodeError>(r));
    }
  }
}

TEST_CASE("messages round-trip bit-exactly") {
  oracle::Rng rng(0x20a1b355u);
  for (int type = 1; type <= 7; ++type) {
    for (int i = 0; i < 10000; ++i) {
      const Message m = random_message(rng, type);
      const auto bytes = encode(m);
      REQUIRE(bytes.size() <= kMaxDatagram);
      const DecodeResult r = decode(bytes);
      REQUIRE(std::holds_alternative<Message>(r));
      REQUIRE(std::get<Message>(r) == m);
      // Re-encoding the decoded form reproduces the same bytes.
      REQUIRE(encode(std::get<Message>(r)) == bytes);
    }
  }
}

TEST_CASE("single-field changes always change the bytes") {
  oracle::Rng rng(0x1417ec75u);
  for (int type = 1; type <= 7; ++type) {
    const Message base = random_message(rng, type);
    const auto base_bytes = encode(base);

    auto differs = [&](Message changed) {
      if (changed == base) return;  // mutation landed on the same value
      CHECK(encode(changed) != base_bytes);
    };

    Message m = base;
    m.seq ^= 1;
    differs(m);
    m = base;
    m.tick ^= 0x80000000u;
    differs(m);
    m = base;
    m.timestamp_us ^= 0x100000000ull;
    differs(m);

    if (std::holds_alternative<Join>(base.payload)) {
      m = base;
      std::get<Join>(m.payload).user ^= 1;
      differs(m);
    }
    if (std::holds_alternative<SkeletonFrameMsg>(base.payload)) {
      m = base;
      std::get<SkeletonFrameMsg>(m.payload).joints[24].confidence ^= 1;
      differs(m);
      m = base;
      std::get<SkeletonFrameMsg>(m.payload).joints[0].px += 1.0f;
      differs(m);
    }
    if (std::holds_alternative<SnapshotMsg>(base.payload)) {
      m = base;
      std::get<SnapshotMsg>(m.payload).portal ^= 1;
      differs(m);
    }
    if (std::holds_alternative<EventMsg>(base.payload)) {
      m = base;
      std::get<EventMsg>(m.payload).aux ^= 1;
      differs(m);
    }
  }
}

TEST_CASE("messages of different types never share bytes") {
  oracle::Rng rng(0xd15717c7u);
  std::set<std::vector<std::uint8_t>> seen;
  for (int type = 1; type <= 7; ++type) {
    Message m = random_message(rng, type);
    m.seq = 1;
    m.tick = 2;
    m.timestamp_us = 3;
    const auto bytes = encode(m);
    CHECK(seen.insert(bytes).second);
    CHECK(bytes[4] == type);
  }
}

TEST_CASE("decode is total over random buffers") {
  oracle::Rng rng(0xf0220b05u);

  // Pure junk of many lengths.
  for (int i = 0; i < 500000; ++i) {
    std::vector<std::uint8_t> buf(rng.u32() % 64);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng.u32());
    const DecodeResult r = decode(buf);
    if (std::holds_alternative<Message>(r)) {
      // Anything that decoded must re-encode to the identical buffer.
      CHECK(encode(std::get<Message>(r)) == buf);
    }
  }

  // Valid messages with random byte corruption.
  for (int i = 0; i < 100000; ++i) {
    Message m = random_message(rng, 1 + static_cast<int>(rng.u32() % 7));
    auto bytes = encode(m);
    const int flips = 1 + static_cast<int>(rng.u32() % 4);
    for (int f = 0; f < flips; ++f) {
      bytes[rng.u32() % bytes.size()] ^= static_cast<std::uint8_t>(1 + rng.u32() % 255);
    }
    (void)decode(bytes);

    // Random truncation of valid messages.
    bytes.resize(rng.u32() % (bytes.size() + 1));
    (void)decode(bytes);
  }
}

TEST_CASE("snapshot size budget") {
  oracle::Rng rng(0x57ac40ffu);

  auto snapshot_with = [&](std::size_t users, std::size_t bones, std::size_t objects) {
    SnapshotMsg s;
    s.bone_count = static_cast<std::uint8_t>(bones);
    s.users.resize(users);
    for (auto& u : s.users) {
      u.id = rng.u32();
      u.bones.resize(bones);
    }
    s.objects.resize(objects);
    return msg(1, 1, 1, s);
  };

  // 2 users x 20 bones + 2 objects: the sizing example.
  const auto two = encode(snapshot_with(2, 20, 2));
  CHECK(two.size() == 21 + 3 + 2 * (16 + 20 * 16) + 2 * 33 + 1);
  CHECK(two.size() <= kMaxDatagram);

  // 3 users x 25 bones still fits.
  CHECK(encode(snapshot_with(3, 25, 2)).size() <= kMaxDatagram);

  // 4 users x 25 bones does not.
  CHECK_THROWS_AS(encode(snapshot_with(4, 25, 2)), OversizeError);
}

TEST_CASE("sequence comparison") {
  CHECK(seq_newer(1, 0));
  CHECK(seq_newer(0, 0xFFFFFFFFu));
  CHECK_FALSE(seq_newer(5, 5));
  CHECK_FALSE(seq_newer(0, 1));
  CHECK(seq_newer(0x80000000u, 1));  // 0x7FFFFFFF ahead: still newer
  CHECK_FALSE(seq_newer(0x80000001u, 1));  // exactly 2^31 apart: neither newer

  oracle::Rng rng(0x5e94e33bu);
  for (int i = 0; i < 100000; ++i) {
    const ms2::Seq a = rng.u32(), b = rng.u32();
    if (a == b) {
      CHECK_FALSE(seq_newer(a, b));
    } else if (a - b == 0x80000000u) {
      CHECK_FALSE(seq_newer(a, b));
      CHECK_FALSE(seq_newer(b, a));
    } else {
      CHECK(seq_newer(a, b) != seq_newer(b, a));
    }
  }
}

TEST_CASE("bundled conformance vectors decode and re-encode exactly") {
  std::ifstream in(std::string(MS2_TEST_DATA_DIR) + "/wire_vectors.jsonl");
  REQUIRE(in.good());
  std::string line;
  std::size_t vectors = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const auto bytes = ms2::wire::from_hex(j.at("hex").get<std::string>());
    const ms2::wire::DecodeResult r = ms2::wire::decode(bytes);
    REQUIRE(std::holds_alternative<ms2::wire::Message>(r));
    const auto& m = std::get<ms2::wire::Message>(r);
    CHECK(ms2::wire::message_to_json(m) == j.at("message"));
    CHECK(ms2::wire::encode(m) == bytes);
    ++vectors;
  }
  CHECK(vectors == 47);
}
