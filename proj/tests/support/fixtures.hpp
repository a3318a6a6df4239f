#pragma once

// Test-only data generators. Tensor-shaped generators live in the library
// (onloadrt/synthetic.hpp); this adds byte-buffer families for codec fuzzing.

#include <cmath>
#include <cstdint>
#include <vector>

#include "onloadrt/rng.hpp"
#include "onloadrt/synthetic.hpp"
#include "onloadrt/tensor.hpp"

namespace fixtures {

using onloadrt::dense_uniform;
using onloadrt::normal_values;
using onloadrt::sparse_activation;

// Byte-buffer families for codec fuzzing.
enum class ByteFamily : int {
  random = 0,       // incompressible
  zeros,            // one long run
  periodic,         // short repeating pattern (period 1..16)
  sparse_runs,      // zero runs + random bursts
  ascii_words,      // text-like redundancy
  count,
};

inline std::vector<uint8_t> byte_buffer(onloadrt::Rng& rng, ByteFamily f,
                                        size_t n) {
  std::vector<uint8_t> v(n);
  switch (f) {
    case ByteFamily::random:
      for (auto& b : v) b = uint8_t(rng.next_u64());
      break;
    case ByteFamily::zeros:
      break;  // already zero
    case ByteFamily::periodic: {
      size_t period = 1 + rng.below(16);
      std::vector<uint8_t> pat(period);
      for (auto& b : pat) b = uint8_t(rng.next_u64());
      for (size_t i = 0; i < n; ++i) v[i] = pat[i % period];
      break;
    }
    case ByteFamily::sparse_runs: {
      size_t i = 0;
      while (i < n) {
        size_t zrun = 1 + rng.below(200);
        i = std::min(n, i + zrun);
        size_t brun = 1 + rng.below(24);
        for (size_t j = 0; j < brun && i < n; ++j, ++i)
          v[i] = uint8_t(rng.next_u64());
      }
      break;
    }
    case ByteFamily::ascii_words: {
      static const char* words[] = {"tensor", "packet", "relu",  "plane",
                                    "offset", "stream", "block", "graph"};
      size_t i = 0;
      while (i < n) {
        const char* w = words[rng.below(8)];
        for (const char* p = w; *p && i < n; ++p) v[i++] = uint8_t(*p);
        if (i < n) v[i++] = ' ';
      }
      break;
    }
    default:
      break;
  }
  return v;
}

}  // namespace fixtures
