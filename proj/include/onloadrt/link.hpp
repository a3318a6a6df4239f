#pragma once

// Deterministic network emulation.
//
// A link is (bandwidth, one-way latency). Every message pays
// latency + bytes/bandwidth, in each direction. The uplink models occupancy
// (back-to-back sends hold the sender for the full delay, so they queue
// behind each other); the response direction is an absolute delivery-time
// shift, so responses in flight overlap instead of queueing — propagation
// delay does not cap pipelined throughput.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>

#include "errors.hpp"

namespace onloadrt {

struct LinkSpec {
  std::string name = "custom";
  double bandwidth_bits_per_s = 0;
  double latency_ms = 0;

  double bytes_per_s() const { return bandwidth_bits_per_s / 8.0; }

  // One-way delivery delay for a payload of n bytes.
  double delivery_ms(size_t n) const {
    return latency_ms + 1000.0 * double(n) / bytes_per_s();
  }
};

inline const std::map<std::string, LinkSpec>& link_presets() {
  static const std::map<std::string, LinkSpec> presets = {
      {"ethernet", {"ethernet", 1e9, 0.5}},
      {"wifi", {"wifi", 400e6, 2.0}},
      {"4g", {"4g", 20e6, 50.0}},
      {"3g", {"3g", 2e6, 100.0}},
  };
  return presets;
}

// Accepts a preset name ("wifi") or "BITS_PER_S:LATENCY_MS" (e.g. the 4g
// preset spelled out is "20000000:50").
inline LinkSpec parse_link(const std::string& s) {
  auto it = link_presets().find(s);
  if (it != link_presets().end()) return it->second;
  size_t colon = s.find(':');
  if (colon == std::string::npos)
    throw Error("unknown link '" + s + "' (presets: ethernet, wifi, 4g, 3g; "
                "or BITS_PER_S:LATENCY_MS)");
  LinkSpec spec;
  try {
    spec.bandwidth_bits_per_s = std::stod(s.substr(0, colon));
    spec.latency_ms = std::stod(s.substr(colon + 1));
  } catch (const std::logic_error&) {
    throw Error("bad link spec '" + s + "'");
  }
  if (!(spec.bandwidth_bits_per_s > 0) || spec.latency_ms < 0)
    throw Error("link needs positive bandwidth and nonnegative latency");
  return spec;
}

// Emulated uplink occupancy: hold the calling thread for the full delivery
// time before handing bytes to the real (effectively instant) transport.
inline void emulate_send_delay(const LinkSpec& link, size_t bytes) {
  std::this_thread::sleep_for(
      std::chrono::duration<double, std::milli>(link.delivery_ms(bytes)));
}

// Emulated response path: compute when a frame received at `received_at`
// counts as arrived, and let the caller wait until then. Consecutive
// responses keep their spacing because the target is an absolute timestamp.
inline std::chrono::steady_clock::time_point emulated_arrival(
    const LinkSpec& link, std::chrono::steady_clock::time_point received_at,
    size_t bytes) {
  return received_at + std::chrono::duration_cast<
                           std::chrono::steady_clock::duration>(
                           std::chrono::duration<double, std::milli>(
                               link.delivery_ms(bytes)));
}

}  // namespace onloadrt
