#pragma once

// Profiling: offline calibration tables plus cheap online corrections.
//
// The expensive facts about a model (per-layer compute time, packed sizes,
// packing cost, accuracy loss per bitwidth) are measured once, offline, per
// candidate split. At run time only two kinds of scalars are tracked: a
// network estimate (latency + bandwidth EMAs) and load scaling factors that
// stretch the offline layer times when a processor is busier or slower than
// it was during calibration.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "model_io.hpp"
#include "packed_tensor.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "wire_io.hpp"

namespace onloadrt {

// ---- offline profile -------------------------------------------------------

// Dense table indexed by (candidate split index, bitwidth index).
struct ProfileTable {
  size_t cols = 0;
  std::vector<double> cells;

  void init(size_t rows, size_t c) {
    cols = c;
    cells.assign(rows * c, 0.0);
  }
  double& at(size_t r, size_t c) { return cells[r * cols + c]; }
  double at(size_t r, size_t c) const { return cells[r * cols + c]; }
};

struct ProfileDB {
  uint64_t model_digest = 0;
  uint64_t calib_seed = 0;
  uint32_t calib_count = 0;
  std::string client_unit = "cpu";

  // Per-node offline layer times, milliseconds. Client times are kept per
  // processing-unit tag so one profile can host measurements from several
  // client devices; `client_unit` names the active one.
  std::map<std::string, std::vector<double>> t_layer_by_unit;
  std::vector<double> t_server_ms;

  std::vector<SplitPoint> splits;   // ascending candidate split ids
  std::vector<uint8_t> bitwidths;   // 0 = passthrough
  ProfileTable t_pack_ms;           // packing cost on the client
  ProfileTable d_size_bytes;        // mean serialized bytes crossing the cut
  ProfileTable acc_delta_pp;        // top-1 agreement loss, percentage points

  // Derived prefix sums (not serialized; rebuilt by finalize()).
  std::vector<double> client_prefix_;  // sum of t_layer[0..i]
  std::vector<double> server_suffix_;  // sum of t_server[i+1..N]

  const std::vector<double>& t_layer_ms() const {
    auto it = t_layer_by_unit.find(client_unit);
    if (it == t_layer_by_unit.end())
      throw MissingProfileEntry("profile has no layer times for unit '" +
                                client_unit + "'");
    return it->second;
  }

  void finalize() {
    const auto& tl = t_layer_ms();
    if (tl.size() != t_server_ms.size())
      throw ModelFormatError("profile: client/server layer tables disagree");
    size_t n = tl.size();
    client_prefix_.assign(n, 0.0);
    server_suffix_.assign(n + 1, 0.0);
    double acc = 0;
    for (size_t i = 0; i < n; ++i) {
      acc += tl[i];
      client_prefix_[i] = acc;
    }
    double sacc = 0;
    server_suffix_[n] = 0.0;
    for (size_t i = n; i-- > 0;) {
      server_suffix_[i] = sacc + (i + 1 < n ? t_server_ms[i + 1] : 0.0);
      sacc = server_suffix_[i];
    }
  }

  // Client compute for nodes [0, s] at calibration speed.
  double client_prefix_ms(SplitPoint s) const {
    if (s >= client_prefix_.size())
      throw RangeError("profile: split id out of range");
    return client_prefix_[s];
  }

  // Server compute for nodes (s, N] at calibration speed.
  double server_suffix_ms(SplitPoint s) const {
    if (s >= client_prefix_.size())
      throw RangeError("profile: split id out of range");
    return server_suffix_[s];
  }

  size_t split_index(SplitPoint s) const {
    for (size_t i = 0; i < splits.size(); ++i)
      if (splits[i] == s) return i;
    throw MissingProfileEntry("profile has no row for split " +
                              std::to_string(s));
  }

  size_t bitwidth_index(uint8_t b) const {
    for (size_t i = 0; i < bitwidths.size(); ++i)
      if (bitwidths[i] == b) return i;
    throw MissingProfileEntry("profile has no column for bitwidth " +
                              std::to_string(int(b)));
  }
};

// ---- calibration ------------------------------------------------------------

struct CalibrationOptions {
  uint64_t seed = 1;
  uint32_t count = 16;  // calibration inputs
  std::vector<SplitPoint> splits;              // empty -> relu-only candidates
  std::vector<uint8_t> bitwidths = {kPassthroughBits, 8, 6, 4, 3, 2};
  std::string unit = "cpu";
};

inline ProfileDB calibrate(const DepGraph& g, const Weights& w,
                           const CalibrationOptions& opts) {
  using clock = std::chrono::steady_clock;
  auto ms_between = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  if (opts.count == 0) throw Error("calibrate: need at least one input");
  for (uint8_t b : opts.bitwidths)
    PackingPolicy{b, Codec::lz4}.validate();

  ProfileDB db;
  db.model_digest = model_digest(g, w);
  db.calib_seed = opts.seed;
  db.calib_count = opts.count;
  db.client_unit = opts.unit;
  db.splits = opts.splits.empty() ? candidate_splits(g, true) : opts.splits;
  for (SplitPoint s : db.splits)
    if (s > g.max_split()) throw RangeError("calibrate: split out of range");
  db.bitwidths = opts.bitwidths;

  const size_t n_nodes = g.num_nodes();
  std::vector<Shape> shapes = infer_shapes(g);

  // Calibration inputs: seeded iid normal in the model's input shape.
  std::vector<Tensor> inputs;
  inputs.reserve(opts.count);
  for (uint32_t i = 0; i < opts.count; ++i) {
    Rng rng(opts.seed ^ (0xd1b54a32d192ed03ull * (i + 1)));
    Tensor t = Tensor::zeros(g.nodes[0].params.input_shape);
    for (auto& v : t.data) v = float(rng.normal());
    inputs.push_back(std::move(t));
  }

  // Pass 1: timed full forwards (one attributed to the client unit, one to
  // the server), keeping every node output for the packing sweep.
  std::vector<double> client_ms(n_nodes, 0.0), server_ms(n_nodes, 0.0);
  std::vector<ExecResult> runs;
  std::vector<size_t> base_top1;
  ExecPlan full{0, g.max_split(), {}, {}};
  for (uint32_t id = 0; id < n_nodes; ++id) full.emit.push_back(id);

  for (const Tensor& in : inputs) {
    std::vector<double> ms;
    ExecResult r = execute(g, w, full, &in, &ms);
    for (size_t i = 0; i < n_nodes; ++i) client_ms[i] += ms[i];
    base_top1.push_back(top1(r.outputs.at(g.output_id())));
    runs.push_back(std::move(r));

    execute(g, w, ExecPlan{0, g.max_split(), {}, {g.output_id()}}, &in, &ms);
    for (size_t i = 0; i < n_nodes; ++i) server_ms[i] += ms[i];
  }
  for (size_t i = 0; i < n_nodes; ++i) {
    client_ms[i] /= opts.count;
    server_ms[i] /= opts.count;
  }
  db.t_layer_by_unit[opts.unit] = client_ms;
  db.t_server_ms = server_ms;

  // Pass 2: pack cost, crossing size, and top-1 agreement per (split, bits).
  db.t_pack_ms.init(db.splits.size(), db.bitwidths.size());
  db.d_size_bytes.init(db.splits.size(), db.bitwidths.size());
  db.acc_delta_pp.init(db.splits.size(), db.bitwidths.size());

  for (size_t si = 0; si < db.splits.size(); ++si) {
    SplitPoint s = db.splits[si];
    auto deps = split_dependencies(g, s);
    for (size_t bi = 0; bi < db.bitwidths.size(); ++bi) {
      PackingPolicy policy{db.bitwidths[bi], Codec::lz4};
      double pack_total = 0, bytes_total = 0;
      size_t agree = 0;
      for (uint32_t k = 0; k < opts.count; ++k) {
        if (s == g.max_split()) {
          ++agree;  // nothing crosses; client output is the real output
          continue;
        }
        ExecPlan resume{s + 1, g.max_split(), {}, {g.output_id()}};
        auto t0 = clock::now();
        std::vector<PackedTensor> packed;
        for (uint32_t d : deps)
          packed.push_back(pack(runs[k].outputs.at(d), policy, d));
        pack_total += ms_between(t0, clock::now());
        for (const PackedTensor& p : packed) {
          bytes_total += double(p.wire_size());
          resume.inject.emplace(p.dep_id, unpack(p));
        }
        ExecResult sr = execute(g, w, resume);
        agree += top1(sr.outputs.at(g.output_id())) == base_top1[k];
      }
      db.t_pack_ms.at(si, bi) = pack_total / opts.count;
      db.d_size_bytes.at(si, bi) = bytes_total / opts.count;
      db.acc_delta_pp.at(si, bi) =
          100.0 * (1.0 - double(agree) / double(opts.count));
    }
  }

  db.finalize();
  return db;
}

// ---- profile persistence ----------------------------------------------------

constexpr char kProfileMagic[4] = {'O', 'L', 'P', 'F'};

inline std::vector<uint8_t> serialize_profile(const ProfileDB& db) {
  using namespace wire_io;
  std::vector<uint8_t> out;
  out.insert(out.end(), kProfileMagic, kProfileMagic + 4);
  put_u8(out, 1);
  put_u64(out, db.model_digest);
  put_u64(out, db.calib_seed);
  put_u32(out, db.calib_count);

  auto put_string = [&](const std::string& s) {
    put_u16(out, static_cast<uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  };
  put_string(db.client_unit);

  uint32_t n_nodes = static_cast<uint32_t>(db.t_server_ms.size());
  put_u32(out, n_nodes);
  put_u16(out, static_cast<uint16_t>(db.t_layer_by_unit.size()));
  for (const auto& [unit, times] : db.t_layer_by_unit) {
    put_string(unit);
    if (times.size() != n_nodes)
      throw ModelFormatError("profile: layer table size mismatch");
    for (double v : times) put_f64(out, v);
  }
  for (double v : db.t_server_ms) put_f64(out, v);

  put_u32(out, static_cast<uint32_t>(db.splits.size()));
  for (SplitPoint s : db.splits) put_u32(out, s);
  put_u16(out, static_cast<uint16_t>(db.bitwidths.size()));
  for (uint8_t b : db.bitwidths) put_u8(out, b);

  for (const ProfileTable* t :
       {&db.t_pack_ms, &db.d_size_bytes, &db.acc_delta_pp})
    for (double v : t->cells) put_f64(out, v);
  return out;
}

inline ProfileDB parse_profile(const std::vector<uint8_t>& blob) {
  using namespace wire_io;
  try {
    Reader r(blob.data(), blob.size());
    const uint8_t* magic = r.bytes(4);
    if (std::memcmp(magic, kProfileMagic, 4) != 0)
      throw ModelFormatError("profile: bad magic");
    if (r.u8() != 1) throw ModelFormatError("profile: unsupported version");

    ProfileDB db;
    db.model_digest = r.u64();
    db.calib_seed = r.u64();
    db.calib_count = r.u32();

    auto get_string = [&] {
      uint16_t n = r.u16();
      const uint8_t* p = r.bytes(n);
      return std::string(reinterpret_cast<const char*>(p), n);
    };
    db.client_unit = get_string();

    uint32_t n_nodes = r.u32();
    uint16_t n_units = r.u16();
    for (uint16_t u = 0; u < n_units; ++u) {
      std::string unit = get_string();
      std::vector<double> times(n_nodes);
      for (auto& v : times) v = r.f64();
      db.t_layer_by_unit[unit] = std::move(times);
    }
    db.t_server_ms.resize(n_nodes);
    for (auto& v : db.t_server_ms) v = r.f64();

    db.splits.resize(r.u32());
    for (auto& s : db.splits) s = r.u32();
    db.bitwidths.resize(r.u16());
    for (auto& b : db.bitwidths) b = r.u8();

    for (ProfileTable* t : {&db.t_pack_ms, &db.d_size_bytes, &db.acc_delta_pp}) {
      t->init(db.splits.size(), db.bitwidths.size());
      for (auto& v : t->cells) v = r.f64();
    }
    if (r.remaining() != 0)
      throw ModelFormatError("profile: trailing bytes");
    db.finalize();
    return db;
  } catch (const CorruptPayload&) {
    throw ModelFormatError("profile: truncated file");
  }
}

inline void save_profile(const ProfileDB& db, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError("cannot write profile: " + path);
  auto blob = serialize_profile(db);
  f.write(reinterpret_cast<const char*>(blob.data()), blob.size());
}

inline ProfileDB load_profile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError("cannot open profile: " + path);
  std::vector<uint8_t> blob((std::istreambuf_iterator<char>(f)),
                            std::istreambuf_iterator<char>());
  return parse_profile(blob);
}

// ---- network estimation ------------------------------------------------------

// One link's running averages. Bandwidth in bytes/second, latency in ms.
struct LinkEstimate {
  double latency_ms = 0.0;
  double bandwidth_Bps = 0.0;
  bool has_latency = false;
  bool has_bandwidth = false;
};

struct NetworkEstimate {
  std::string current_type;             // e.g. "wifi", "4g"
  LinkEstimate realtime;                // fast EMA, reset on type change
  std::map<std::string, LinkEstimate> historical;  // slow EMA per type
  double last_observation_ms = -1.0e300;           // timeline stamp
  double freshness_window_ms = 300000.0;           // 5 minutes

  static constexpr double kAlphaRealtime = 0.5;
  static constexpr double kAlphaHistorical = 0.05;
};

namespace detail {

inline void ema_update(double& avg, bool& has, double sample, double alpha) {
  avg = has ? alpha * sample + (1.0 - alpha) * avg : sample;
  has = true;
}

}  // namespace detail

// Feeds one observed transfer into the estimator. A zero-byte transfer is a
// pure latency probe (duration == round-trip-free one-way latency); anything
// else contributes a bandwidth sample after subtracting the current latency
// estimate from its duration.
inline void observe_transfer(NetworkEstimate& net, const std::string& type,
                             double bytes, double duration_ms, double now_ms) {
  if (duration_ms < 0 || bytes < 0)
    throw Error("observe_transfer: negative sample");
  if (type != net.current_type) {
    net.realtime = LinkEstimate{};  // other link: real-time state is void
    net.current_type = type;
  }
  LinkEstimate& hist = net.historical[type];

  if (bytes == 0) {
    detail::ema_update(net.realtime.latency_ms, net.realtime.has_latency,
                       duration_ms, NetworkEstimate::kAlphaRealtime);
    detail::ema_update(hist.latency_ms, hist.has_latency, duration_ms,
                       NetworkEstimate::kAlphaHistorical);
  } else {
    double lat = net.realtime.has_latency
                     ? net.realtime.latency_ms
                     : (hist.has_latency ? hist.latency_ms : 0.0);
    double serial_ms = std::max(duration_ms - lat, 1e-6);
    double sample = bytes / (serial_ms / 1000.0);
    detail::ema_update(net.realtime.bandwidth_Bps, net.realtime.has_bandwidth,
                       sample, NetworkEstimate::kAlphaRealtime);
    detail::ema_update(hist.bandwidth_Bps, hist.has_bandwidth, sample,
                       NetworkEstimate::kAlphaHistorical);
  }
  net.last_observation_ms = now_ms;
}

// Current best (latency, bandwidth) pair: fresh real-time averages win,
// stale ones fall back to the historical record for the current link type.
inline LinkEstimate best_estimate(const NetworkEstimate& net, double now_ms) {
  bool fresh = now_ms - net.last_observation_ms <= net.freshness_window_ms;
  if (fresh && net.realtime.has_bandwidth) {
    LinkEstimate e = net.realtime;
    if (!e.has_latency) {
      auto it = net.historical.find(net.current_type);
      if (it != net.historical.end() && it->second.has_latency) {
        e.latency_ms = it->second.latency_ms;
        e.has_latency = true;
      }
    }
    return e;
  }
  auto it = net.historical.find(net.current_type);
  if (it != net.historical.end() && it->second.has_bandwidth)
    return it->second;
  throw NoEstimate("no fresh sample and no history for link type '" +
                   net.current_type + "'");
}

// Predicted one-way transfer time for a payload: latency plus serialization.
inline double estimate_transfer_ms(const NetworkEstimate& net, double bytes,
                                   double now_ms) {
  LinkEstimate e = best_estimate(net, now_ms);
  return e.latency_ms + 1000.0 * bytes / e.bandwidth_Bps;
}

// ---- load scaling --------------------------------------------------------------

struct LoadState {
  double sf_client = 1.0;
  double sf_server = 1.0;
};

// Ratio of an observed execution time to the offline expectation for the
// same work; multiplying offline times by it predicts the loaded machine.
inline double scaling_factor(double measured_ms, double offline_ms) {
  if (!(offline_ms > 0.0))
    throw ZeroOfflineTime("scaling factor needs a positive offline baseline");
  return measured_ms / offline_ms;
}

}  // namespace onloadrt
