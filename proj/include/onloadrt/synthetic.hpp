#pragma once

// Seeded synthetic data: activation-like sparse tensors, dense uniform
// noise, and normal draws. Shared by the CLI's tensor generator and the
// test/benchmark fixtures so "a 90%-zeros tensor" means the same thing
// everywhere.

#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace onloadrt {

// Activation-like sparse data: zeros arrive in long runs (as they do in
// post-relu feature maps, where whole spatial regions of a channel go dark),
// interleaved with short bursts of half-normal values. The generator retries
// substreams until the sample really is >= `zero_floor` zero, so callers can
// rely on the advertised sparsity.
inline std::vector<float> sparse_activation(Rng& rng, size_t n,
                                            double zero_floor = 0.90) {
  auto geometric = [&](double mean) {
    double u = rng.uniform();
    if (u >= 1.0) u = 0.999999;
    double p = 1.0 / mean;
    return size_t(1.0 + std::log(1.0 - u) / std::log(1.0 - p));
  };

  for (int attempt = 0; attempt < 32; ++attempt) {
    std::vector<float> v;
    v.reserve(n);
    while (v.size() < n) {
      size_t zrun = geometric(430.0);
      for (size_t i = 0; i < zrun && v.size() < n; ++i) v.push_back(0.0f);
      size_t burst = geometric(34.0);
      double scale = std::exp(0.5 * rng.normal());
      for (size_t i = 0; i < burst && v.size() < n; ++i)
        v.push_back(float(std::fabs(rng.normal()) * scale));
    }
    size_t zeros = 0;
    for (float x : v) zeros += (x == 0.0f);
    if (double(zeros) >= zero_floor * double(n)) return v;
  }
  throw Error("sparse_activation: sparsity target not reached");
}

inline std::vector<float> dense_uniform(Rng& rng, size_t n, float lo = -1.0f,
                                        float hi = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.uniform(lo, hi));
  return v;
}

inline std::vector<float> normal_values(Rng& rng, size_t n, double mean = 0.0,
                                        double std = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = float(mean + std * rng.normal());
  return v;
}

}  // namespace onloadrt
