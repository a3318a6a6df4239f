#pragma once

// Comparison sweeps: predicted (and optionally live) behavior of several
// offloading policies across a bandwidth or deadline axis.
//
// Variants:
//   full        - whole split x bitwidth space, caller's constraints/targets
//   split_only  - splits at full precision, minimum latency (the classic
//                 partition-only baseline; no compression, no constraints)
//   client_only - everything on the device
//   server_only - raw input shipped to the server

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "client.hpp"
#include "errors.hpp"
#include "link.hpp"
#include "profiler.hpp"
#include "scheduler.hpp"
#include "server.hpp"

namespace onloadrt {

enum class Variant : uint8_t { full, split_only, client_only, server_only };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::split_only: return "split_only";
    case Variant::client_only: return "client_only";
    case Variant::server_only: return "server_only";
  }
  return "?";
}

inline std::vector<Variant> all_variants() {
  return {Variant::full, Variant::split_only, Variant::client_only,
          Variant::server_only};
}

// Splits at full precision only.
inline std::vector<SplitConfig> passthrough_space(const ProfileDB& db) {
  std::vector<SplitConfig> out;
  out.reserve(db.splits.size());
  for (SplitPoint s : db.splits) out.push_back({s, kPassthroughBits});
  return out;
}

// Percentage of always-offload server work this configuration gives back.
inline double server_savings_pct(const ProfileDB& db, SplitConfig cfg) {
  double full = db.server_suffix_ms(0);
  if (!(full > 0)) return 0;
  return 100.0 * (1.0 - db.server_suffix_ms(cfg.split) / full);
}

inline Decision pick_variant(Variant v, const ProfileDB& db, NetSnapshot net,
                             LoadState load,
                             const std::vector<HardConstraint>& constraints,
                             const std::vector<SoftTarget>& targets,
                             bool pipelined) {
  SplitPoint client_split =
      static_cast<SplitPoint>(db.client_prefix_.size() - 1);
  switch (v) {
    case Variant::full: {
      std::vector<SoftTarget> t = targets;
      if (t.empty()) t.push_back({Metric::latency, Goal::minimize, 0});
      return schedule(build_space(db), db, constraints, t, net, load,
                      pipelined);
    }
    case Variant::split_only:
      return schedule(passthrough_space(db), db, {},
                      {{Metric::latency, Goal::minimize, 0}}, net, load,
                      pipelined);
    case Variant::client_only: {
      SplitConfig cfg{client_split, kPassthroughBits};
      return {cfg, predict_metrics(db, cfg, net, load, pipelined), false, 1};
    }
    case Variant::server_only: {
      SplitConfig cfg{0, kPassthroughBits};
      return {cfg, predict_metrics(db, cfg, net, load, pipelined), false, 1};
    }
  }
  throw Error("unknown sweep variant");
}

struct SweepRow {
  std::string axis_name;
  double axis = 0;
  Variant variant = Variant::full;
  SplitConfig config;
  bool best_effort = false;
  MetricVector predicted;
  double savings_pct = 0;
  bool live = false;
  double live_latency_ms = 0;
  double live_throughput_rps = 0;
};

namespace detail {

inline SweepRow make_sweep_row(const char* axis_name, double axis, Variant v,
                               const Decision& d, const ProfileDB& db) {
  SweepRow row;
  row.axis_name = axis_name;
  row.axis = axis;
  row.variant = v;
  row.config = d.config;
  row.best_effort = d.best_effort;
  row.predicted = d.predicted;
  row.savings_pct = server_savings_pct(db, d.config);
  return row;
}

}  // namespace detail

// One row per (bandwidth point, variant). Axis values are bits/second.
inline std::vector<SweepRow> bandwidth_sweep(
    const ProfileDB& db, const std::vector<double>& bandwidths_bits,
    double latency_ms, const std::vector<Variant>& variants, LoadState load,
    const std::vector<HardConstraint>& constraints,
    const std::vector<SoftTarget>& targets, bool pipelined) {
  std::vector<SweepRow> rows;
  for (double bits : bandwidths_bits) {
    NetSnapshot net{latency_ms, bits / 8.0};
    for (Variant v : variants)
      rows.push_back(detail::make_sweep_row(
          "bandwidth_bits_per_s", bits, v,
          pick_variant(v, db, net, load, constraints, targets, pipelined),
          db));
  }
  return rows;
}

// One row per deadline point: tightest-latency scheduling that still gives
// back as much server time as possible.
inline std::vector<SweepRow> deadline_sweep(
    const ProfileDB& db, const std::vector<double>& deadlines_ms,
    NetSnapshot net, LoadState load, bool pipelined) {
  std::vector<SweepRow> rows;
  for (double deadline : deadlines_ms) {
    std::vector<HardConstraint> hard{
        {Metric::latency, Cmp::le, deadline, 0}};
    std::vector<SoftTarget> soft{{Metric::server_cost, Goal::minimize, 0}};
    rows.push_back(detail::make_sweep_row(
        "deadline_ms", deadline, Variant::full,
        schedule(build_space(db), db, hard, soft, net, load, pipelined),
        db));
  }
  return rows;
}

// One row per (client slowdown factor, variant): how decisions move as the
// device gets busier. Axis values multiply the client scaling factor.
inline std::vector<SweepRow> slowdown_sweep(
    const ProfileDB& db, const std::vector<double>& factors, NetSnapshot net,
    const std::vector<Variant>& variants, LoadState load,
    const std::vector<HardConstraint>& constraints,
    const std::vector<SoftTarget>& targets, bool pipelined) {
  std::vector<SweepRow> rows;
  for (double f : factors) {
    LoadState scaled = load;
    scaled.sf_client = load.sf_client * f;
    for (Variant v : variants)
      rows.push_back(detail::make_sweep_row(
          "client_slowdown", f, v,
          pick_variant(v, db, net, scaled, constraints, targets, pipelined),
          db));
  }
  return rows;
}

// Measures a configuration for real: in-process server, emulated link.
inline RunReport measure_live(const DepGraph& g, const Weights& w,
                              const std::vector<Tensor>& inputs,
                              std::optional<LinkSpec> link, SplitConfig cfg,
                              size_t count, size_t warmup, bool pipelined) {
  if (cfg.split == g.max_split())
    return run_local(g, w, inputs, count, warmup);
  InferenceServer server(g, w);
  server.start(0);
  ClientConnection conn("127.0.0.1", server.port(), model_digest(g, w), link);
  RunReport rep = pipelined
                      ? conn.run_pipelined(g, w, inputs, cfg, count, warmup)
                      : conn.run_sequential(g, w, inputs, cfg, count, warmup);
  server.stop();
  return rep;
}

constexpr const char* kSweepSchema = "onloadrt.sweep.v1";

inline void write_sweep_csv(std::ostream& out,
                            const std::vector<SweepRow>& rows) {
  out << "schema,axis_name,axis,variant,split,bitwidth,best_effort,"
         "latency_ms,throughput_rps,server_cost_ms,device_cost_ms,"
         "accuracy_delta_pp,savings_pct,live,live_latency_ms,"
         "live_throughput_rps\n";
  for (const SweepRow& r : rows) {
    out << kSweepSchema << ',' << r.axis_name << ',' << r.axis << ','
        << variant_name(r.variant) << ',' << r.config.split << ','
        << int(r.config.bitwidth) << ',' << (r.best_effort ? 1 : 0) << ','
        << r.predicted.latency_ms << ',' << r.predicted.throughput_rps << ','
        << r.predicted.server_cost_ms << ',' << r.predicted.device_cost_ms
        << ',' << r.predicted.accuracy_delta_pp << ',' << r.savings_pct
        << ',' << (r.live ? 1 : 0) << ',' << r.live_latency_ms << ','
        << r.live_throughput_rps << '\n';
  }
}

}  // namespace onloadrt
