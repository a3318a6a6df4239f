#pragma once

// Input-specific linear quantization.
//
// Each tensor is quantized against its own observed [min, max] range, so the
// codes always use the full 2^b grid for the data actually present. The
// scale is kept as a power-of-two exponent: s = log2((2^b - 1) / (max - min))
// and codes are round-half-even of (d - min) * 2^s. Storing s as float64 and
// evaluating exp2 on that stored value keeps encoder and decoder multipliers
// bit-identical across hosts, and recovers both range endpoints to within a
// float32 ULP.

#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"

namespace onloadrt {

// Header that accompanies every quantized buffer. When `constant` is set the
// tensor was single-valued: no codes are stored and val_min reproduces every
// element exactly.
struct QuantHeader {
  float val_min = 0.0f;
  double scale_exp = 0.0;  // s such that code = round((d - val_min) * 2^s)
  bool constant = false;
};

inline void check_bits(int bits) {
  if (bits < 1 || bits > 16) throw RangeError("quant: bits must be 1..16");
}

struct QuantResult {
  QuantHeader header;
  std::vector<uint16_t> codes;  // empty when header.constant
};

inline QuantResult isquant(const float* d, size_t n, int bits) {
  check_bits(bits);
  QuantResult r;
  if (n == 0) {
    r.header.constant = true;
    return r;
  }
  float lo = d[0], hi = d[0];
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(d[i]))
      throw NonFiniteInput("quant: tensor contains NaN or infinity");
    lo = std::min(lo, d[i]);
    hi = std::max(hi, d[i]);
  }
  r.header.val_min = lo;
  if (lo == hi) {
    r.header.constant = true;
    return r;
  }

  const double levels = double((uint32_t(1) << bits) - 1);
  const double s = std::log2(levels / (double(hi) - double(lo)));
  r.header.scale_exp = s;
  // Use the *stored* exponent so the decoder's multiplier matches. The
  // exponent travels as float64: float32 spacing near |s| ~ 2^k would move
  // the recovered maximum by (max-min)*ln2*2^(k-24), tens of ULPs for the
  // narrow ranges high bitwidths produce.
  const double mult = std::exp2(r.header.scale_exp);

  r.codes.resize(n);
  const double dlo = double(lo);
  for (size_t i = 0; i < n; ++i) {
    double code = std::nearbyint((double(d[i]) - dlo) * mult);
    if (code < 0.0) code = 0.0;
    if (code > levels) code = levels;
    r.codes[i] = static_cast<uint16_t>(code);
  }
  return r;
}

inline QuantResult isquant(const std::vector<float>& d, int bits) {
  return isquant(d.data(), d.size(), bits);
}

inline void dequant(const QuantHeader& h, const uint16_t* codes, size_t n,
                    int bits, float* out) {
  check_bits(bits);
  if (h.constant) {
    if (codes != nullptr && n != 0)
      throw HeaderMismatch("quant: constant header but codes present");
    return;  // caller fills with val_min via dequant(vector) overload
  }
  const double mult = std::exp2(h.scale_exp);
  const double lo = double(h.val_min);
  for (size_t i = 0; i < n; ++i)
    out[i] = static_cast<float>(double(codes[i]) / mult + lo);
}

inline std::vector<float> dequant(const QuantHeader& h,
                                  const std::vector<uint16_t>& codes, int bits,
                                  size_t n) {
  check_bits(bits);
  std::vector<float> out(n, h.val_min);
  if (h.constant) {
    if (!codes.empty())
      throw HeaderMismatch("quant: constant header but codes present");
    return out;
  }
  if (codes.size() != n)
    throw HeaderMismatch("quant: code count disagrees with element count");
  dequant(h, codes.data(), n, bits, out.data());
  return out;
}

}  // namespace onloadrt
