#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"

namespace onloadrt {

// Dense float32 tensor. Rank and meaning of the axes are up to the operator
// consuming it; convolutional layers use CHW (batch size is fixed at one).
struct Tensor {
  std::vector<uint32_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<uint32_t> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel() != data.size())
      throw ShapeError("tensor data size does not match shape");
  }

  static Tensor zeros(std::vector<uint32_t> s) {
    size_t n = 1;
    for (uint32_t d : s) n *= d;
    return Tensor(std::move(s), std::vector<float>(n, 0.0f));
  }

  size_t numel() const {
    size_t n = 1;
    for (uint32_t d : shape) n *= d;
    return n;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_to_string(const std::vector<uint32_t>& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out.empty() ? "scalar" : out;
}

}  // namespace onloadrt
