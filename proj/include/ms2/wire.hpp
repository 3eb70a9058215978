// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Datagram codec. Header (21 bytes, little-endian): magic 4D 53 32,
// version 01, msg_type, seq u32, tick u32, timestamp_us u64. Payload layouts
// are documented field-by-field in docs/protocol.md; conformance vectors
// live in tests/data/wire_vectors.jsonl. Wire reals are 32-bit floats and
// are carried through undisturbed: decode(encode(m)) reproduces m bit for
// bit, with no renormalization anywhere in the codec.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <variant>
#include <vector>

#include <ms2/core.hpp>

namespace ms2::wire {

inline constexpr std::size_t kHeaderSize = 21;
inline constexpr std::size_t kMaxDatagram = 1400;
inline constexpr std::uint8_t kMagic[3] = {0x4D, 0x53, 0x32};
inline constexpr std::uint8_t kVersion = 1;

class OversizeError : public Error {
public:
  explicit OversizeError(const std::string& what) : Error(what) {}
};

struct Join {
  UserId user = 0;
  bool operator==(const Join&) const = default;
};

struct JoinAck {
  UserId user = 0;
  std::uint32_t tick_rate_hz = 0;
  bool operator==(const JoinAck&) const = default;
};

// Carries no payload. Liveness plus event acknowledgment: the header's tick
// field holds the sender's contiguous event-id high-water mark.
struct Heartbeat {
  bool operator==(const Heartbeat&) const = default;
};

struct WireJoint {
  float px = 0, py = 0, pz = 0;
  std::uint8_t confidence = 0;
  bool operator==(const WireJoint&) const = default;
};

struct SkeletonFrameMsg {
  UserId user = 0;
  std::array<WireJoint, 25> joints{};
  bool operator==(const SkeletonFrameMsg&) const = default;
};

struct ObjectPoseMsg {
  EntityId entity = 0;
  float px = 0, py = 0, pz = 0;
  float qw = 1, qx = 0, qy = 0, qz = 0;
  float reprojection_error = 0;
  std::uint8_t valid = 0;
  bool operator==(const ObjectPoseMsg&) const = default;
};

struct SnapshotUser {
  UserId id = 0;
  float root[3] = {0, 0, 0};
  std::vector<std::array<float, 4>> bones;  // w, x, y, z each
  bool operator==(const SnapshotUser&) const = default;
};

struct SnapshotObject {
  EntityId id = 0;
  float px = 0, py = 0, pz = 0;
  float qw = 1, qx = 0, qy = 0, qz = 0;
  std::uint8_t valid = 0;
  bool operator==(const SnapshotObject&) const = default;
};

struct SnapshotMsg {
  std::uint8_t bone_count = 0;  // bones per user; all users share one rig
  std::vector<SnapshotUser> users;
  std::vector<SnapshotObject> objects;
  std::uint8_t portal = 0;  // 0 locked, 1 unlocked
  bool operator==(const SnapshotMsg&) const = default;
};

struct EventMsg {
  std::uint32_t event_id = 0;  // 1-based, contiguous per session
  std::uint8_t kind = 0;
  UserId user = 0;
  EntityId entity = 0;
  std::uint32_t aux = 0;
  bool operator==(const EventMsg&) const = default;
};

using Payload =
    std::variant<Join, JoinAck, Heartbeat, SkeletonFrameMsg, ObjectPoseMsg, SnapshotMsg, EventMsg>;

// msg_type byte is the variant index + 1 (JOIN=1 .. EVENT=7).
struct Message {
  Seq seq = 0;
  Tick tick = 0;
  std::uint64_t timestamp_us = 0;
  Payload payload;
  bool operator==(const Message&) const = default;
};

inline std::uint8_t msg_type_of(const Message& m) {
  return static_cast<std::uint8_t>(m.payload.index() + 1);
}

enum class DecodeError : std::uint8_t {
  BadMagic,
  BadVersion,
  UnknownType,
  Truncated,  // short buffer, short payload, or trailing bytes
};

inline const char* decode_error_name(DecodeError e) {
  switch (e) {
    case DecodeError::BadMagic: return "BadMagic";
    case DecodeError::BadVersion: return "BadVersion";
    case DecodeError::UnknownType: return "UnknownType";
    case DecodeError::Truncated: return "Truncated";
  }
  return "Unknown";
}

using DecodeResult = std::variant<Message, DecodeError>;

namespace detail {

inline void put_u8(std::vector<std::uint8_t>& b, std::uint8_t v) { b.push_back(v); }

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  put_u32(b, static_cast<std::uint32_t>(v));
  put_u32(b, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::vector<std::uint8_t>& b, float v) {
  put_u32(b, std::bit_cast<std::uint32_t>(v));
}

// Bounds-checked big-endian-free readers over a byte window.
struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  bool need(std::size_t n) const { return size - pos >= n; }
  std::uint8_t u8() { return data[pos++]; }
  std::uint32_t u32() {
    const std::uint32_t v = static_cast<std::uint32_t>(data[pos]) |
                            static_cast<std::uint32_t>(data[pos + 1]) << 8 |
                            static_cast<std::uint32_t>(data[pos + 2]) << 16 |
                            static_cast<std::uint32_t>(data[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | hi << 32;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> b;
  b.reserve(64);
  b.insert(b.end(), std::begin(kMagic), std::end(kMagic));
  detail::put_u8(b, kVersion);
  detail::put_u8(b, msg_type_of(m));
  detail::put_u32(b, m.seq);
  detail::put_u32(b, m.tick);
  detail::put_u64(b, m.timestamp_us);

  std::visit(
      [&b](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Join>) {
          detail::put_u32(b, p.user);
        } else if constexpr (std::is_same_v<T, JoinAck>) {
          detail::put_u32(b, p.user);
          detail::put_u32(b, p.tick_rate_hz);
        } else if constexpr (std::is_same_v<T, Heartbeat>) {
          // no payload
        } else if constexpr (std::is_same_v<T, SkeletonFrameMsg>) {
          detail::put_u32(b, p.user);
          for (const WireJoint& j : p.joints) {
            detail::put_f32(b, j.px);
            detail::put_f32(b, j.py);
            detail::put_f32(b, j.pz);
            detail::put_u8(b, j.confidence);
          }
        } else if constexpr (std::is_same_v<T, ObjectPoseMsg>) {
          detail::put_u32(b, p.entity);
          detail::put_f32(b, p.px);
          detail::put_f32(b, p.py);
          detail::put_f32(b, p.pz);
          detail::put_f32(b, p.qw);
          detail::put_f32(b, p.qx);
          detail::put_f32(b, p.qy);
          detail::put_f32(b, p.qz);
          detail::put_f32(b, p.reprojection_error);
          detail::put_u8(b, p.valid);
        } else if constexpr (std::is_same_v<T, SnapshotMsg>) {
          if (p.users.size() > 255 || p.objects.size() > 255) {
            throw ValidationError("snapshot counts must fit one byte");
          }
          for (const SnapshotUser& u : p.users) {
            if (u.bones.size() != p.bone_count) {
              throw ValidationError("snapshot user bone count mismatch");
            }
          }
          detail::put_u8(b, static_cast<std::uint8_t>(p.users.size()));
          detail::put_u8(b, static_cast<std::uint8_t>(p.objects.size()));
          detail::put_u8(b, p.bone_count);
          for (const SnapshotUser& u : p.users) {
            detail::put_u32(b, u.id);
            for (float f : u.root) detail::put_f32(b, f);
            for (const auto& q : u.bones) {
              for (float f : q) detail::put_f32(b, f);
            }
          }
          for (const SnapshotObject& o : p.objects) {
            detail::put_u32(b, o.id);
            detail::put_f32(b, o.px);
            detail::put_f32(b, o.py);
            detail::put_f32(b, o.pz);
            detail::put_f32(b, o.qw);
            detail::put_f32(b, o.qx);
            detail::put_f32(b, o.qy);
            detail::put_f32(b, o.qz);
            detail::put_u8(b, o.valid);
          }
          detail::put_u8(b, p.portal);
        } else if constexpr (std::is_same_v<T, EventMsg>) {
          detail::put_u32(b, p.event_id);
          detail::put_u8(b, p.kind);
          detail::put_u32(b, p.user);
          detail::put_u32(b, p.entity);
          detail::put_u32(b, p.aux);
        }
      },
      m.payload);

  if (b.size() > kMaxDatagram) {
    throw OversizeError("datagram would be " + std::to_string(b.size()) + " bytes, limit " +
                        std::to_string(kMaxDatagram));
  }
  return b;
}

// Total over arbitrary bytes; never reads past the buffer.
inline DecodeResult decode(const std::uint8_t* data, std::size_t size) {
  if (size < kHeaderSize) return DecodeError::Truncated;
  if (data[0] != kMagic[0] || data[1] != kMagic[1] || data[2] != kMagic[2]) {
    return DecodeError::BadMagic;
  }
  if (data[3] != kVersion) return DecodeError::BadVersion;
  const std::uint8_t type = data[4];
  if (type < 1 || type > 7) return DecodeError::UnknownType;

  detail::Reader r{data, size, 5};
  Message m;
  m.seq = r.u32();
  m.tick = r.u32();
  m.timestamp_us = r.u64();

  const std::size_t payload = size - kHeaderSize;
  switch (type) {
    case 1: {
      if (payload != 4) return DecodeError::Truncated;
      m.payload = Join{r.u32()};
      break;
    }
    case 2: {
      if (payload != 8) return DecodeError::Truncated;
      JoinAck a;
      a.user = r.u32();
      a.tick_rate_hz = r.u32();
      m.payload = a;
      break;
    }
    case 3: {
      if (payload != 0) return DecodeError::Truncated;
      m.payload = Heartbeat{};
      break;
    }
    case 4: {
      if (payload != 4 + 25 * 13) return DecodeError::Truncated;
      SkeletonFrameMsg f;
      f.user = r.u32();
      for (WireJoint& j : f.joints) {
        j.px = r.f32();
        j.py = r.f32();
        j.pz = r.f32();
        j.confidence = r.u8();
      }
      m.payload = std::move(f);
      break;
    }
    case 5: {
      if (payload != 37) return DecodeError::Truncated;
      ObjectPoseMsg o;
      o.entity = r.u32();
      o.px = r.f32();
      o.py = r.f32();
      o.pz = r.f32();
      o.qw = r.f32();
      o.qx = r.f32();
      o.qy = r.f32();
      o.qz = r.f32();
      o.reprojection_error = r.f32();
      o.valid = r.u8();
      m.payload = std::move(o);
      break;
    }
    case 6: {
      if (payload < 4) return DecodeError::Truncated;
      SnapshotMsg s;
      const std::uint8_t user_count = r.u8();
      const std::uint8_t object_count = r.u8();
      s.bone_count = r.u8();
      const std::size_t per_user = 4 + 12 + static_cast<std::size_t>(s.bone_count) * 16;
      const std::size_t expected = 3 + user_count * per_user + object_count * 33 + 1;
      if (payload != expected) return DecodeError::Truncated;
      s.users.resize(user_count);
      for (SnapshotUser& u : s.users) {
        u.id = r.u32();
        for (float& f : u.root) f = r.f32();
        u.bones.resize(s.bone_count);
        for (auto& q : u.bones) {
          for (float& f : q) f = r.f32();
        }
      }
      s.objects.resize(object_count);
      for (SnapshotObject& o : s.objects) {
        o.id = r.u32();
        o.px = r.f32();
        o.py = r.f32();
        o.pz = r.f32();
        o.qw = r.f32();
        o.qx = r.f32();
        o.qy = r.f32();
        o.qz = r.f32();
        o.valid = r.u8();
      }
      s.portal = r.u8();
      m.payload = std::move(s);
      break;
    }
    case 7: {
      if (payload != 17) return DecodeError::Truncated;
      EventMsg e;
      e.event_id = r.u32();
      e.kind = r.u8();
      e.user = r.u32();
      e.entity = r.u32();
      e.aux = r.u32();
      m.payload = std::move(e);
      break;
    }
  }
  return m;
}

inline DecodeResult decode(const std::vector<std::uint8_t>& bytes) {
  return decode(bytes.data(), bytes.size());
}

// Serial-arithmetic comparison; newest wins across the 2^32 wrap.
inline bool seq_newer(Seq a, Seq b) {
  const std::uint32_t d = a - b;
  return d != 0 && d < 0x80000000u;
}

}  // namespace ms2::wire
