#pragma once

// Self-describing packed tensor record: the unit that crosses the network.
//
// Packing pipeline: quantize (or pass floats through) -> bit-plane shuffle
// -> LZ4, with an automatic fallback to a stored payload whenever LZ4 would
// expand the data. The record header carries everything needed to invert the
// pipeline on the other side.
//
// Record layout (all integers little-endian):
//   magic "ISPM" | u8 version | u32 dep_id | u8 rank | u32 dims[rank]
//   | u8 bitwidth (0 = float passthrough) | u8 flags (bit0 = constant)
//   | f32 val_min | f64 scale_exp | u8 codec_id | u32 raw_len
//   | u32 payload_len | payload bytes

#include <cstdint>
#include <cstring>
#include <vector>

#include "bitshuffle.hpp"
#include "errors.hpp"
#include "lz4.hpp"
#include "quant.hpp"
#include "tensor.hpp"
#include "wire_io.hpp"

namespace onloadrt {

enum class Codec : uint8_t { none = 0, lz4 = 1 };

// bitwidth 0 selects float32 passthrough (no quantization).
constexpr uint8_t kPassthroughBits = 0;

struct PackingPolicy {
  uint8_t bitwidth = kPassthroughBits;
  Codec codec = Codec::lz4;

  void validate() const {
    if (bitwidth > 16)
      throw RangeError("packing policy: bitwidth must be 0 (passthrough) or 1..16");
  }
};

constexpr uint8_t kPackedTensorVersion = 1;
constexpr uint8_t kFlagConstant = 0x01;
constexpr size_t kMaxRank = 8;

struct PackedTensor {
  uint32_t dep_id = 0;
  std::vector<uint32_t> shape;
  uint8_t bitwidth = kPassthroughBits;
  bool constant = false;
  float val_min = 0.0f;
  double scale_exp = 0.0;
  Codec codec = Codec::none;  // codec actually applied to payload
  uint32_t raw_len = 0;       // payload size before compression
  std::vector<uint8_t> payload;

  size_t numel() const {
    size_t n = 1;
    for (uint32_t d : shape) n *= d;
    return n;
  }

  size_t wire_size() const { return 4 + 1 + 4 + 1 + 4 * shape.size() + 1 + 1 + 4 + 8 + 1 + 4 + 4 + payload.size(); }

  void serialize(std::vector<uint8_t>& out) const {
    using namespace wire_io;
    out.insert(out.end(), {'I', 'S', 'P', 'M'});
    put_u8(out, kPackedTensorVersion);
    put_u32(out, dep_id);
    put_u8(out, static_cast<uint8_t>(shape.size()));
    for (uint32_t d : shape) put_u32(out, d);
    put_u8(out, bitwidth);
    put_u8(out, constant ? kFlagConstant : 0);
    put_f32(out, val_min);
    put_f64(out, scale_exp);
    put_u8(out, static_cast<uint8_t>(codec));
    put_u32(out, raw_len);
    put_u32(out, static_cast<uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
  }

  std::vector<uint8_t> serialize() const {
    std::vector<uint8_t> out;
    out.reserve(wire_size());
    serialize(out);
    return out;
  }

  static PackedTensor parse(wire_io::Reader& r) {
    PackedTensor t;
    const uint8_t* magic = r.bytes(4);
    if (std::memcmp(magic, "ISPM", 4) != 0)
      throw CorruptPayload("packed tensor: bad magic");
    if (r.u8() != kPackedTensorVersion)
      throw CorruptPayload("packed tensor: unsupported record version");
    t.dep_id = r.u32();
    uint8_t rank = r.u8();
    if (rank > kMaxRank) throw CorruptPayload("packed tensor: rank too large");
    t.shape.resize(rank);
    for (auto& d : t.shape) d = r.u32();
    t.bitwidth = r.u8();
    if (t.bitwidth > 16)
      throw CorruptPayload("packed tensor: bitwidth out of range");
    uint8_t flags = r.u8();
    if (flags & ~kFlagConstant)
      throw CorruptPayload("packed tensor: unknown flags");
    t.constant = flags & kFlagConstant;
    t.val_min = r.f32();
    t.scale_exp = r.f64();
    uint8_t codec_id = r.u8();
    if (codec_id > static_cast<uint8_t>(Codec::lz4))
      throw CorruptPayload("packed tensor: unknown codec");
    t.codec = static_cast<Codec>(codec_id);
    t.raw_len = r.u32();
    uint32_t payload_len = r.u32();
    const uint8_t* p = r.bytes(payload_len);
    t.payload.assign(p, p + payload_len);
    return t;
  }

  static PackedTensor parse(const uint8_t* p, size_t n, size_t* consumed = nullptr) {
    wire_io::Reader r(p, n);
    PackedTensor t = parse(r);
    if (consumed) *consumed = r.offset();
    return t;
  }
};

namespace detail {

// Compresses `raw` with the requested codec; falls back to a stored payload
// when compression would not shrink the data.
inline std::pair<Codec, std::vector<uint8_t>> encode_payload(
    std::vector<uint8_t> raw, Codec want) {
  if (want == Codec::lz4) {
    std::vector<uint8_t> packed = lz4::compress_block(raw);
    if (packed.size() < raw.size()) return {Codec::lz4, std::move(packed)};
  }
  return {Codec::none, std::move(raw)};
}

}  // namespace detail

inline PackedTensor pack(const Tensor& t, const PackingPolicy& policy,
                         uint32_t dep_id) {
  policy.validate();
  PackedTensor out;
  out.dep_id = dep_id;
  out.shape = t.shape;
  out.bitwidth = policy.bitwidth;
  if (t.shape.size() > kMaxRank) throw ShapeError("pack: rank too large");

  std::vector<uint8_t> raw;
  if (policy.bitwidth == kPassthroughBits) {
    if (!t.all_finite())
      throw NonFiniteInput("pack: tensor contains NaN or infinity");
    raw.resize(t.data.size() * 4);
    std::memcpy(raw.data(), t.data.data(), raw.size());
  } else {
    QuantResult q = isquant(t.data, policy.bitwidth);
    out.val_min = q.header.val_min;
    out.scale_exp = q.header.scale_exp;
    out.constant = q.header.constant;
    if (out.constant) {
      out.codec = Codec::none;
      out.raw_len = 0;
      return out;  // header alone reconstructs the tensor
    }
    raw = bitshuffle(q.codes, policy.bitwidth);
  }

  out.raw_len = static_cast<uint32_t>(raw.size());
  auto [codec, payload] = detail::encode_payload(std::move(raw), policy.codec);
  out.codec = codec;
  out.payload = std::move(payload);
  return out;
}

inline Tensor unpack(const PackedTensor& p) {
  size_t n = p.numel();

  if (p.bitwidth != kPassthroughBits && p.constant) {
    if (p.raw_len != 0 || !p.payload.empty())
      throw HeaderMismatch("unpack: constant record carries a payload");
    Tensor t = Tensor::zeros(p.shape);
    for (auto& v : t.data) v = p.val_min;
    return t;
  }

  std::vector<uint8_t> raw;
  switch (p.codec) {
    case Codec::none:
      if (p.payload.size() != p.raw_len)
        throw HeaderMismatch("unpack: stored payload length disagrees with raw length");
      raw = p.payload;
      break;
    case Codec::lz4:
      raw = lz4::decompress_block(p.payload, p.raw_len);
      break;
    default:
      throw CorruptPayload("unpack: unknown codec");
  }

  if (p.bitwidth == kPassthroughBits) {
    if (raw.size() != n * 4)
      throw HeaderMismatch("unpack: float payload length disagrees with shape");
    Tensor t = Tensor::zeros(p.shape);
    std::memcpy(t.data.data(), raw.data(), raw.size());
    return t;
  }

  std::vector<uint16_t> codes = bitunshuffle(raw, p.bitwidth, n);
  QuantHeader h{p.val_min, p.scale_exp, false};
  Tensor t = Tensor::zeros(p.shape);
  dequant(h, codes.data(), n, p.bitwidth, t.data.data());
  return t;
}

}  // namespace onloadrt
