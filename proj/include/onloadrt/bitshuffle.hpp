#pragma once

// Bit-plane shuffle for quantized tensors.
//
// A run of N values quantized to b bits is rearranged into b planes of
// ceil(N/8) bytes. Plane k holds bit k of every value (plane 0 = least
// significant), packed LSB-first within each byte and zero-padded at the
// tail. Grouping equal-significance bits makes the stream far more
// repetitive, which is what the byte-oriented compressor downstream needs.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "errors.hpp"

namespace onloadrt {

inline size_t bitplane_bytes(size_t n) { return (n + 7) / 8; }

inline std::vector<uint8_t> bitshuffle(const uint16_t* q, size_t n, int bits) {
  if (bits < 1 || bits > 16) throw RangeError("bitshuffle: bits must be 1..16");
  const uint32_t limit = uint32_t(1) << bits;
  const size_t plane = bitplane_bytes(n);
  std::vector<uint8_t> out(plane * size_t(bits), 0);
  for (size_t i = 0; i < n; ++i) {
    uint16_t v = q[i];
    if (v >= limit)
      throw ValueOverflow("bitshuffle: value does not fit declared bit width");
    for (int k = 0; k < bits; ++k)
      out[size_t(k) * plane + (i >> 3)] |=
          static_cast<uint8_t>(((v >> k) & 1u) << (i & 7));
  }
  return out;
}

inline std::vector<uint8_t> bitshuffle(const std::vector<uint16_t>& q,
                                       int bits) {
  return bitshuffle(q.data(), q.size(), bits);
}

// Inverse transform. `n` is the original element count; the buffer must be
// exactly bits * ceil(n/8) bytes.
inline std::vector<uint16_t> bitunshuffle(const uint8_t* planes, size_t nbytes,
                                          int bits, size_t n) {
  if (bits < 1 || bits > 16)
    throw RangeError("bitunshuffle: bits must be 1..16");
  const size_t plane = bitplane_bytes(n);
  if (nbytes != plane * size_t(bits))
    throw HeaderMismatch("bitunshuffle: buffer size disagrees with header");
  std::vector<uint16_t> q(n, 0);
  for (int k = 0; k < bits; ++k) {
    const uint8_t* p = planes + size_t(k) * plane;
    for (size_t i = 0; i < n; ++i)
      q[i] |= static_cast<uint16_t>(((p[i >> 3] >> (i & 7)) & 1u) << k);
  }
  return q;
}

inline std::vector<uint16_t> bitunshuffle(const std::vector<uint8_t>& planes,
                                          int bits, size_t n) {
  return bitunshuffle(planes.data(), planes.size(), bits, n);
}

}  // namespace onloadrt
