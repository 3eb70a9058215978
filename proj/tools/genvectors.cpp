// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the wire conformance vector file: one JSON object per line,
// {"hex": <datagram bytes>, "message": <decoded view>}. Seeded, so the
// output is stable; the companion test decodes each hex string and checks
// both directions.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include <ms2/wire.hpp>
#include <ms2/wire_json.hpp>

using namespace ms2;

namespace {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(eng_()); }
  std::uint64_t u64() { return eng_(); }
  std::uint8_t u8(std::uint8_t hi) { return static_cast<std::uint8_t>(eng_() % (hi + 1ull)); }
  float f32(double lo, double hi) {
    const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return static_cast<float>(lo + (hi - lo) * u);
  }

  wire::Message header() {
    wire::Message m;
    m.seq = u32();
    m.tick = u32();
    m.timestamp_us = u64();
    return m;
  }

  wire::SkeletonFrameMsg skeleton() {
    wire::SkeletonFrameMsg sf;
    sf.user = u32();
    for (auto& j : sf.joints) {
      j.px = f32(-3, 3);
      j.py = f32(0, 2.2);
      j.pz = f32(-3, 3);
      j.confidence = u8(2);
    }
    return sf;
  }

  wire::ObjectPoseMsg object_pose() {
    wire::ObjectPoseMsg op;
    op.entity = u32();
    op.px = f32(-3, 3);
    op.py = f32(0, 2.2);
    op.pz = f32(-3, 3);
    op.qw = f32(-1, 1);
    op.qx = f32(-1, 1);
    op.qy = f32(-1, 1);
    op.qz = f32(-1, 1);
    op.reprojection_error = f32(0, 5);
    op.valid = u8(1);
    return op;
  }

  wire::SnapshotMsg snapshot(std::size_t users, std::uint8_t bones, std::size_t objects) {
    wire::SnapshotMsg snap;
    snap.bone_count = bones;
    for (std::size_t i = 0; i < users; ++i) {
      wire::SnapshotUser u;
      u.id = u32();
      u.root[0] = f32(-3, 3);
      u.root[1] = f32(0, 2.2);
      u.root[2] = f32(-3, 3);
      for (std::size_t b = 0; b < bones; ++b) {
        u.bones.push_back({f32(-1, 1), f32(-1, 1), f32(-1, 1), f32(-1, 1)});
      }
      snap.users.push_back(std::move(u));
    }
    for (std::size_t i = 0; i < objects; ++i) {
      wire::SnapshotObject o;
      o.id = u32();
      o.px = f32(-3, 3);
      o.py = f32(0, 2.2);
      o.pz = f32(-3, 3);
      o.qw = f32(-1, 1);
      o.qx = f32(-1, 1);
      o.qy = f32(-1, 1);
      o.qz = f32(-1, 1);
      o.valid = u8(1);
      snap.objects.push_back(o);
    }
    snap.portal = u8(1);
    return snap;
  }

 private:
  std::mt19937_64 eng_;
};

void emit(std::ostream& out, const wire::Message& m) {
  const auto bytes = wire::encode(m);
  out << nlohmann::json{{"hex", wire::to_hex(bytes)}, {"message", wire::message_to_json(m)}}
             .dump()
      << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regenerate the wire conformance vectors"};
  std::string out_path = "tests/data/wire_vectors.jsonl";
  app.add_option("--out", out_path, "vector file to write");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(std::filesystem::path(out_path).parent_path());
  std::ofstream out(out_path);
  if (!out) {
    std::fprintf(stderr, "cannot write %s\n", out_path.c_str());
    return 2;
  }

  // Fixed landmarks first: the all-zero-header heartbeat, minimal join pair,
  // an empty snapshot, and a portal event.
  {
    wire::Message m;
    m.payload = wire::Heartbeat{};
    emit(out, m);
  }
  {
    wire::Message m;
    m.seq = 1;
    m.payload = wire::Join{7};
    emit(out, m);
    m.seq = 2;
    m.payload = wire::JoinAck{7, 60};
    emit(out, m);
  }
  {
    wire::Message m;
    m.seq = 3;
    m.tick = 100;
    m.payload = wire::SnapshotMsg{};
    emit(out, m);
    m.seq = 4;
    m.tick = 101;
    m.payload = wire::EventMsg{1, 3, 0, 0, 0};
    emit(out, m);
  }

  Gen gen(0x5eedf00d2024ull);
  for (int i = 0; i < 6; ++i) {
    wire::Message m = gen.header();
    m.payload = wire::Join{gen.u32()};
    emit(out, m);
    m = gen.header();
    m.payload = wire::JoinAck{gen.u32(), gen.u32()};
    emit(out, m);
    m = gen.header();
    m.payload = wire::Heartbeat{};
    emit(out, m);
    m = gen.header();
    m.payload = gen.skeleton();
    emit(out, m);
    m = gen.header();
    m.payload = gen.object_pose();
    emit(out, m);
    m = gen.header();
    m.payload = gen.snapshot(1 + i % 3, static_cast<std::uint8_t>(8 + 4 * (i % 5)), i % 3);
    emit(out, m);
    m = gen.header();
    m.payload = wire::EventMsg{gen.u32(), static_cast<std::uint8_t>(1 + i % 4), gen.u32(),
                               gen.u32(), gen.u32()};
    emit(out, m);
  }

  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}
