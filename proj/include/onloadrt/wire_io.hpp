#pragma once

// Little-endian scalar packing helpers shared by every on-disk and on-wire
// format in the library.

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

#include "errors.hpp"

namespace onloadrt::wire_io {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

inline void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xFF));
  out.push_back(uint8_t(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

// Bounded reader over a byte span. Throws the error type chosen by the
// caller's wrapper when reads run past the end.
class Reader {
 public:
  Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

  size_t remaining() const { return n_ - off_; }
  size_t offset() const { return off_; }

  uint8_t u8() { return take(1)[0]; }

  uint16_t u16() {
    const uint8_t* b = take(2);
    return uint16_t(b[0]) | (uint16_t(b[1]) << 8);
  }

  uint32_t u32() {
    const uint8_t* b = take(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
  }

  uint64_t u64() {
    const uint8_t* b = take(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
  }

  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  const uint8_t* bytes(size_t n) { return take(n); }

 private:
  const uint8_t* take(size_t n) {
    if (off_ + n > n_) throw CorruptPayload("record truncated");
    const uint8_t* b = p_ + off_;
    off_ += n;
    return b;
  }

  const uint8_t* p_;
  size_t n_;
  size_t off_ = 0;
};

// FNV-1a, used to fingerprint model structure + weights for the handshake.
inline uint64_t fnv1a(const uint8_t* p, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace onloadrt::wire_io
