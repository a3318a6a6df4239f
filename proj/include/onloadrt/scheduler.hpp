#pragma once

// Multi-objective split/bitwidth selection.
//
// Every candidate configuration (split point, packing bitwidth) gets a
// five-metric prediction from the profile tables plus the current network
// and load state. Hard constraints are applied one by one in priority
// order; if some constraint wipes out the surviving set, the scheduler
// degrades to best effort: it returns the configuration (from the set that
// satisfied all earlier constraints) with the smallest normalized violation
// of the offending constraint. Whatever survives is then ordered
// lexicographically by the soft targets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "packed_tensor.hpp"
#include "profiler.hpp"

namespace onloadrt {

enum class Metric : uint8_t {
  latency,      // end-to-end ms for one request
  throughput,   // requests/s
  server_cost,  // server compute ms per request
  device_cost,  // client compute (+pack) ms per request
  accuracy,     // top-1 agreement loss vs unsplit, percentage points
};

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::latency: return "latency";
    case Metric::throughput: return "throughput";
    case Metric::server_cost: return "server_cost";
    case Metric::device_cost: return "device_cost";
    case Metric::accuracy: return "accuracy";
  }
  return "?";
}

inline Metric metric_from_name(const std::string& s) {
  for (uint8_t i = 0; i <= uint8_t(Metric::accuracy); ++i)
    if (s == metric_name(Metric(i))) return Metric(i);
  throw Error("unknown metric: " + s);
}

struct MetricVector {
  double latency_ms = 0;
  double throughput_rps = 0;
  double server_cost_ms = 0;
  double device_cost_ms = 0;
  double accuracy_delta_pp = 0;

  double get(Metric m) const {
    switch (m) {
      case Metric::latency: return latency_ms;
      case Metric::throughput: return throughput_rps;
      case Metric::server_cost: return server_cost_ms;
      case Metric::device_cost: return device_cost_ms;
      case Metric::accuracy: return accuracy_delta_pp;
    }
    return 0;
  }
};

struct SplitConfig {
  SplitPoint split = 0;
  uint8_t bitwidth = kPassthroughBits;

  bool operator==(const SplitConfig&) const = default;
};

// Bytes/second + one-way ms, as fed to predictions.
struct NetSnapshot {
  double latency_ms = 0;
  double bandwidth_Bps = 0;
};

// Tie-break: prefer keeping more on the client (larger split), then the
// narrower bitwidth; passthrough counts as 32 effective bits.
inline int effective_bits(uint8_t bitwidth) {
  return bitwidth == kPassthroughBits ? 32 : bitwidth;
}

inline bool config_tiebreak_less(const SplitConfig& a, const SplitConfig& b) {
  if (a.split != b.split) return a.split > b.split;
  return effective_bits(a.bitwidth) < effective_bits(b.bitwidth);
}

// Predicted metrics for one configuration. Device cost covers the client
// prefix (scaled by current client load) plus packing; network time is one
// uplink of the packed crossing tensors; server cost is the scaled suffix.
// Pipelined throughput is limited by the slowest of the three stages,
// sequential throughput by the whole latency.
inline MetricVector predict_metrics(const ProfileDB& db, SplitConfig cfg,
                                    NetSnapshot net, LoadState load,
                                    bool pipelined) {
  size_t si = db.split_index(cfg.split);
  size_t bi = db.bitwidth_index(cfg.bitwidth);
  bool client_only = size_t(cfg.split) + 1 == db.client_prefix_.size();

  MetricVector m;
  m.device_cost_ms = load.sf_client * db.client_prefix_ms(cfg.split) +
                     db.t_pack_ms.at(si, bi);
  double bytes = db.d_size_bytes.at(si, bi);
  double net_ms = 0.0;
  if (!client_only && bytes > 0.0) {
    if (!(net.bandwidth_Bps > 0))
      throw NoEstimate("predict_metrics: no bandwidth estimate");
    net_ms = net.latency_ms + 1000.0 * bytes / net.bandwidth_Bps;
  } else if (!client_only) {
    // Constant tensors can pack to header-only records, but the uplink
    // still pays the propagation latency.
    net_ms = net.latency_ms;
  }
  m.server_cost_ms = load.sf_server * db.server_suffix_ms(cfg.split);
  m.latency_ms = m.device_cost_ms + net_ms + m.server_cost_ms;
  double bottleneck =
      pipelined ? std::max({m.device_cost_ms, net_ms, m.server_cost_ms})
                : m.latency_ms;
  m.throughput_rps = bottleneck > 0 ? 1000.0 / bottleneck : 0.0;
  m.accuracy_delta_pp = db.acc_delta_pp.at(si, bi);
  return m;
}

// Full candidate space for a profile: every profiled split at every profiled
// bitwidth, except that the pure client split only appears as passthrough
// (nothing crosses the network, so bitwidths are meaningless there).
inline std::vector<SplitConfig> build_space(const ProfileDB& db) {
  SplitPoint client_only =
      static_cast<SplitPoint>(db.client_prefix_.size() - 1);
  std::vector<SplitConfig> out;
  for (SplitPoint s : db.splits) {
    if (s == client_only) {
      out.push_back({s, kPassthroughBits});
      continue;
    }
    for (uint8_t b : db.bitwidths) out.push_back({s, b});
  }
  return out;
}

enum class Cmp : uint8_t { le, ge, eq };

struct HardConstraint {
  Metric metric;
  Cmp op = Cmp::le;
  double threshold = 0;
  double tolerance = 0;  // for Cmp::eq
};

enum class Goal : uint8_t { minimize, maximize, approach };

struct SoftTarget {
  Metric metric;
  Goal goal = Goal::minimize;
  double value = 0;  // for Goal::approach
};

inline double constraint_violation(const HardConstraint& c,
                                   const MetricVector& m) {
  double v = m.get(c.metric);
  switch (c.op) {
    case Cmp::le: return std::max(0.0, v - c.threshold);
    case Cmp::ge: return std::max(0.0, c.threshold - v);
    case Cmp::eq: return std::max(0.0, std::fabs(v - c.threshold) - c.tolerance);
  }
  return 0;
}

inline bool satisfies(const HardConstraint& c, const MetricVector& m) {
  return constraint_violation(c, m) <= 0.0;
}

// Soft-target score: smaller is better for every goal kind.
inline double target_score(const SoftTarget& t, const MetricVector& m) {
  double v = m.get(t.metric);
  switch (t.goal) {
    case Goal::minimize: return v;
    case Goal::maximize: return -v;
    case Goal::approach: return std::fabs(v - t.value);
  }
  return v;
}

struct Decision {
  SplitConfig config;
  MetricVector predicted;
  bool best_effort = false;       // some hard constraint is unsatisfiable
  size_t feasible_count = 0;      // configs surviving all hard constraints
};

// Picks a configuration. `space` must be non-empty. Constraints are applied
// in the given priority order; targets order the survivors
// lexicographically; exact metric ties fall to the structural tie-break.
inline Decision schedule(const std::vector<SplitConfig>& space,
                         const ProfileDB& db,
                         const std::vector<HardConstraint>& constraints,
                         const std::vector<SoftTarget>& targets,
                         NetSnapshot net, LoadState load, bool pipelined) {
  if (space.empty()) throw EmptySpace("schedule: empty configuration space");

  std::vector<MetricVector> metrics(space.size());
  for (size_t i = 0; i < space.size(); ++i)
    metrics[i] = predict_metrics(db, space[i], net, load, pipelined);

  auto pick_best = [&](const std::vector<size_t>& from, auto&& less) {
    size_t best = from[0];
    for (size_t idx : from)
      if (less(idx, best)) best = idx;
    return best;
  };

  std::vector<size_t> feasible(space.size());
  for (size_t i = 0; i < space.size(); ++i) feasible[i] = i;

  for (const HardConstraint& c : constraints) {
    std::vector<size_t> next;
    for (size_t idx : feasible)
      if (satisfies(c, metrics[idx])) next.push_back(idx);
    if (next.empty()) {
      // Best effort: least normalized violation of the first unsatisfiable
      // constraint, over the set that met all higher-priority ones.
      double norm = std::max(std::fabs(c.threshold), 1e-9);
      auto less = [&](size_t a, size_t b) {
        double va = constraint_violation(c, metrics[a]) / norm;
        double vb = constraint_violation(c, metrics[b]) / norm;
        if (va != vb) return va < vb;
        return config_tiebreak_less(space[a], space[b]);
      };
      size_t best = pick_best(feasible, less);
      return {space[best], metrics[best], true, 0};
    }
    feasible = std::move(next);
  }

  auto less = [&](size_t a, size_t b) {
    for (const SoftTarget& t : targets) {
      double sa = target_score(t, metrics[a]);
      double sb = target_score(t, metrics[b]);
      if (sa != sb) return sa < sb;
    }
    return config_tiebreak_less(space[a], space[b]);
  };
  size_t best = pick_best(feasible, less);
  return {space[best], metrics[best], false, feasible.size()};
}

// ---- re-invocation policy -------------------------------------------------

// The facts whose drift forces a fresh scheduling decision.
struct ScheduleInputsSnapshot {
  double bandwidth_Bps = 0;
  double latency_ms = 0;
  double sf_client = 1;
  double sf_server = 1;
};

namespace detail {

inline bool drifted(double prev, double cur, double rel) {
  if (prev == cur) return false;
  if (prev == 0.0) return true;
  return std::fabs(cur - prev) / std::fabs(prev) > rel;
}

}  // namespace detail

// True when any tracked input moved more than 5% since the last decision.
inline bool should_reschedule(const ScheduleInputsSnapshot& prev,
                              const ScheduleInputsSnapshot& cur,
                              double rel = 0.05) {
  return detail::drifted(prev.bandwidth_Bps, cur.bandwidth_Bps, rel) ||
         detail::drifted(prev.latency_ms, cur.latency_ms, rel) ||
         detail::drifted(prev.sf_client, cur.sf_client, rel) ||
         detail::drifted(prev.sf_server, cur.sf_server, rel);
}

// A response that blows through the active latency constraint by more than
// 2x forces a fresh decision even when the 5% drift rule stays quiet
// (bounded staleness for badly wrong predictions).
inline bool deadline_blown(double measured_ms, double constraint_ms) {
  return constraint_ms > 0 && measured_ms > 2.0 * constraint_ms;
}

// ---- CLI-facing parsers -----------------------------------------------------

// "latency<=100", "throughput>=20", "accuracy==1:0.5" (threshold:tolerance).
inline HardConstraint parse_constraint(const std::string& s) {
  size_t pos;
  Cmp op;
  if ((pos = s.find("<=")) != std::string::npos) op = Cmp::le;
  else if ((pos = s.find(">=")) != std::string::npos) op = Cmp::ge;
  else if ((pos = s.find("==")) != std::string::npos) op = Cmp::eq;
  else throw Error("constraint needs <=, >= or ==: " + s);

  HardConstraint c;
  c.metric = metric_from_name(s.substr(0, pos));
  c.op = op;
  std::string rhs = s.substr(pos + 2);
  size_t colon = rhs.find(':');
  if (colon != std::string::npos) {
    if (op != Cmp::eq) throw Error("tolerance only applies to ==: " + s);
    c.tolerance = std::stod(rhs.substr(colon + 1));
    rhs = rhs.substr(0, colon);
  }
  c.threshold = std::stod(rhs);
  return c;
}

// "min:latency", "max:throughput", "approach:latency:80".
inline SoftTarget parse_target(const std::string& s) {
  SoftTarget t;
  if (s.rfind("min:", 0) == 0) {
    t.goal = Goal::minimize;
    t.metric = metric_from_name(s.substr(4));
  } else if (s.rfind("max:", 0) == 0) {
    t.goal = Goal::maximize;
    t.metric = metric_from_name(s.substr(4));
  } else if (s.rfind("approach:", 0) == 0) {
    std::string rest = s.substr(9);
    size_t colon = rest.find(':');
    if (colon == std::string::npos)
      throw Error("approach target needs metric:value: " + s);
    t.goal = Goal::approach;
    t.metric = metric_from_name(rest.substr(0, colon));
    t.value = std::stod(rest.substr(colon + 1));
  } else {
    throw Error("target needs min:/max:/approach: prefix: " + s);
  }
  return t;
}

}  // namespace onloadrt
