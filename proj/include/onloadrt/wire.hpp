#pragma once

// Message grammar spoken between client and server.
//
// Every message is one length-prefixed frame (u32 little-endian byte count,
// then the body). Body layout:
//
//   magic "DYNO" | u8 version | u8 msg_type | u64 request_id | u32 split_id
//   | u16 tensor_count | tensor_count PackedTensor records | trailer
//
// Trailers by type: responses and profile feedback carry f32 server
// milliseconds; hello carries the u64 model digest. A response with
// split_id == kErrorSplit and no tensors reports a request-level failure.

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "errors.hpp"
#include "packed_tensor.hpp"
#include "wire_io.hpp"

namespace onloadrt {

constexpr uint8_t kWireVersion = 1;
constexpr uint32_t kErrorSplit = 0xFFFFFFFFu;

enum class MsgType : uint8_t {
  infer_request = 1,
  infer_response = 2,
  profile_feedback = 3,
  hello = 4,
};

struct WireMessage {
  uint8_t version = kWireVersion;
  MsgType type = MsgType::infer_request;
  uint64_t request_id = 0;
  uint32_t split_id = 0;
  std::vector<PackedTensor> tensors;
  float server_ms = 0.0f;  // infer_response / profile_feedback
  uint64_t digest = 0;     // hello

  bool is_error() const {
    return type == MsgType::infer_response && split_id == kErrorSplit;
  }

  std::vector<uint8_t> serialize() const {
    using namespace wire_io;
    std::vector<uint8_t> out;
    out.insert(out.end(), {'D', 'Y', 'N', 'O'});
    put_u8(out, version);
    put_u8(out, static_cast<uint8_t>(type));
    put_u64(out, request_id);
    put_u32(out, split_id);
    put_u16(out, static_cast<uint16_t>(tensors.size()));
    for (const PackedTensor& t : tensors) t.serialize(out);
    switch (type) {
      case MsgType::infer_response:
      case MsgType::profile_feedback:
        put_f32(out, server_ms);
        break;
      case MsgType::hello:
        put_u64(out, digest);
        break;
      case MsgType::infer_request:
        break;
    }
    return out;
  }

  static WireMessage parse(const uint8_t* p, size_t n) {
    try {
      wire_io::Reader r(p, n);
      const uint8_t* magic = r.bytes(4);
      if (std::memcmp(magic, "DYNO", 4) != 0)
        throw MalformedMessage("wire: bad magic");
      WireMessage m;
      m.version = r.u8();
      if (m.version != kWireVersion)
        throw VersionMismatch("wire: protocol version " +
                              std::to_string(int(m.version)) +
                              " is not supported");
      uint8_t ty = r.u8();
      if (ty < 1 || ty > 4) throw MalformedMessage("wire: unknown msg_type");
      m.type = static_cast<MsgType>(ty);
      m.request_id = r.u64();
      m.split_id = r.u32();
      uint16_t count = r.u16();
      m.tensors.reserve(count);
      for (uint16_t i = 0; i < count; ++i)
        m.tensors.push_back(PackedTensor::parse(r));
      switch (m.type) {
        case MsgType::infer_response:
        case MsgType::profile_feedback:
          m.server_ms = r.f32();
          break;
        case MsgType::hello:
          m.digest = r.u64();
          break;
        case MsgType::infer_request:
          break;
      }
      if (r.remaining() != 0)
        throw MalformedMessage("wire: trailing bytes after message");
      return m;
    } catch (const CorruptPayload& e) {
      throw MalformedMessage(std::string("wire: ") + e.what());
    }
  }

  static WireMessage parse(const std::vector<uint8_t>& frame) {
    return parse(frame.data(), frame.size());
  }
};

// Quick look at a frame's fixed header without parsing tensor records:
// distinguishes "wrong protocol entirely" (close the stream) from "bad body"
// (answer with an error response and keep going).
inline bool frame_header_plausible(const std::vector<uint8_t>& frame) {
  return frame.size() >= 6 && std::memcmp(frame.data(), "DYNO", 4) == 0 &&
         frame[4] == kWireVersion && frame[5] >= 1 && frame[5] <= 4;
}

inline WireMessage make_error_response(uint64_t request_id) {
  WireMessage m;
  m.type = MsgType::infer_response;
  m.request_id = request_id;
  m.split_id = kErrorSplit;
  return m;
}

}  // namespace onloadrt
