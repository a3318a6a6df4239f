#pragma once

// LZ4 block-format codec (compression and decompression).
//
// Output is interoperable with any conforming LZ4 block decoder and the
// decoder accepts output of any conforming block encoder. Only the raw block
// format is implemented here -- no frame header, no checksums; the caller is
// expected to transmit the uncompressed length out of band.
//
// Encoder behaviour follows the canonical greedy parser: 64 KiB window,
// minimum match of 4 bytes, last 5 bytes always emitted as literals, no
// match starting within the final 12 bytes.

#include <cstdint>
#include <cstring>
#include <vector>

#include "errors.hpp"

namespace onloadrt::lz4 {

namespace detail {

constexpr size_t kMinMatch = 4;
constexpr size_t kLastLiterals = 5;   // blocks always end with >=5 literals
constexpr size_t kMatchFloor = 12;    // no match may start after n - 12
constexpr size_t kMaxDistance = 65535;
constexpr int kHashLog = 15;

inline uint32_t read32(const uint8_t* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

inline uint32_t hash32(uint32_t v) {
  return (v * 2654435761u) >> (32 - kHashLog);
}

// Appends a length using the 4-bit nibble + 255-run extension scheme.
inline void put_length(std::vector<uint8_t>& out, size_t v) {
  while (v >= 255) {
    out.push_back(255);
    v -= 255;
  }
  out.push_back(static_cast<uint8_t>(v));
}

}  // namespace detail

// Compresses [src, src+n) into a standalone LZ4 block. Empty input yields a
// single zero token so that every block contains at least one sequence.
inline std::vector<uint8_t> compress_block(const uint8_t* src, size_t n) {
  using namespace detail;
  std::vector<uint8_t> out;
  if (n == 0) {
    out.push_back(0x00);
    return out;
  }
  out.reserve(n / 2 + 16);

  auto emit_literal_run = [&](size_t from, size_t count) {
    // Final sequence of the block: token carries literals only.
    uint8_t token = static_cast<uint8_t>(count < 15 ? count << 4 : 0xF0);
    out.push_back(token);
    if (count >= 15) put_length(out, count - 15);
    out.insert(out.end(), src + from, src + from + count);
  };

  if (n < kMatchFloor + 1) {  // too short to host any match
    emit_literal_run(0, n);
    return out;
  }

  std::vector<uint32_t> table(size_t(1) << kHashLog, 0);  // stores pos + 1
  const size_t match_start_limit = n - kMatchFloor;
  const size_t match_end_limit = n - kLastLiterals;

  size_t anchor = 0;
  size_t pos = 0;
  table[hash32(read32(src))] = 1;
  ++pos;

  for (;;) {
    // --- search for the next match, stepping faster on hostile data ----
    size_t ref;
    uint32_t skip_count = 1u << 6;
    for (;;) {
      if (pos > match_start_limit) goto finish;
      uint32_t h = hash32(read32(src + pos));
      ref = table[h] ? table[h] - 1 : size_t(-1);
      table[h] = static_cast<uint32_t>(pos + 1);
      if (ref != size_t(-1) && pos - ref <= kMaxDistance &&
          read32(src + ref) == read32(src + pos))
        break;
      pos += skip_count++ >> 6;
    }

    // --- widen the match backwards over pending literals ---------------
    while (pos > anchor && ref > 0 && src[pos - 1] == src[ref - 1]) {
      --pos;
      --ref;
    }

    // --- widen forwards -------------------------------------------------
    size_t mlen = kMinMatch;
    while (pos + mlen < match_end_limit && src[ref + mlen] == src[pos + mlen])
      ++mlen;

    // --- emit the sequence ----------------------------------------------
    size_t lit = pos - anchor;
    uint8_t token = static_cast<uint8_t>(lit < 15 ? lit << 4 : 0xF0);
    size_t extra = mlen - kMinMatch;
    token |= static_cast<uint8_t>(extra < 15 ? extra : 15);
    out.push_back(token);
    if (lit >= 15) put_length(out, lit - 15);
    out.insert(out.end(), src + anchor, src + anchor + lit);
    size_t offset = pos - ref;
    out.push_back(static_cast<uint8_t>(offset & 0xFF));
    out.push_back(static_cast<uint8_t>(offset >> 8));
    if (extra >= 15) put_length(out, extra - 15);

    pos += mlen;
    anchor = pos;
    if (pos > match_start_limit) break;
    // Refresh the table near the match end so back-to-back matches chain.
    table[hash32(read32(src + pos - 2))] = static_cast<uint32_t>(pos - 1);
  }

finish:
  emit_literal_run(anchor, n - anchor);
  return out;
}

inline std::vector<uint8_t> compress_block(const std::vector<uint8_t>& src) {
  return compress_block(src.data(), src.size());
}

// Decodes an LZ4 block. `dst_len` must be the exact size of the original
// data; any structural violation or length disagreement throws
// CorruptPayload.
inline void decompress_block(const uint8_t* src, size_t src_len, uint8_t* dst,
                             size_t dst_len) {
  size_t si = 0, di = 0;

  auto read_extended = [&](size_t base) {
    size_t v = base;
    uint8_t b;
    do {
      if (si >= src_len) throw CorruptPayload("lz4: truncated length field");
      b = src[si++];
      v += b;
    } while (b == 255);
    return v;
  };

  if (src_len == 0) {
    if (dst_len == 0) return;
    throw CorruptPayload("lz4: empty block with nonzero raw length");
  }

  for (;;) {
    if (si >= src_len) throw CorruptPayload("lz4: missing end-of-block token");
    uint8_t token = src[si++];

    size_t lit = token >> 4;
    if (lit == 15) lit = read_extended(15);
    if (si + lit > src_len) throw CorruptPayload("lz4: literal overruns input");
    if (di + lit > dst_len)
      throw CorruptPayload("lz4: literal overruns declared raw length");
    std::memcpy(dst + di, src + si, lit);
    si += lit;
    di += lit;

    if (si == src_len) {
      // Blocks must end with a literal-only sequence.
      if (di != dst_len)
        throw CorruptPayload("lz4: decoded size does not match raw length");
      return;
    }

    if (si + 2 > src_len) throw CorruptPayload("lz4: truncated match offset");
    size_t offset = src[si] | (size_t(src[si + 1]) << 8);
    si += 2;
    if (offset == 0 || offset > di)
      throw CorruptPayload("lz4: invalid match offset");

    size_t mlen = (token & 0x0F) + detail::kMinMatch;
    if ((token & 0x0F) == 15) mlen = read_extended(15) + detail::kMinMatch;
    if (di + mlen > dst_len)
      throw CorruptPayload("lz4: match overruns declared raw length");
    // Byte-wise copy: offsets smaller than the length replicate a period.
    for (size_t i = 0; i < mlen; ++i, ++di) dst[di] = dst[di - offset];
  }
}

inline std::vector<uint8_t> decompress_block(const std::vector<uint8_t>& src,
                                             size_t dst_len) {
  std::vector<uint8_t> out(dst_len);
  decompress_block(src.data(), src.size(), out.data(), dst_len);
  return out;
}

}  // namespace onloadrt::lz4
