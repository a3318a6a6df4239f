// Operator front end. One binary, subcommands:
//
//   profile        calibrate a model into a profile file
//   serve          host the server half of a split model
//   infer          one inference, fixed or scheduled configuration
//   run-pipelined  sustained run with feedback-driven rescheduling
//   sweep          decision-space sweeps over bandwidth/deadline/slowdown, CSV out
//   pack / unpack  stand-alone activation packing on tensor files
//   gen-tensor     seeded synthetic tensor files (normal / sparse / uniform)
//   export-model   write a model (e.g. ref:SEED) out as .model/.weights files
//
// Model arguments accept a file prefix (PREFIX.model + PREFIX.weights) or
// "ref:SEED" for the built-in seeded reference CNN. Tensor arguments accept a
// tensor file or "ref:SEED[:INDEX]" for a seeded reference input.

#include <cxxabi.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "onloadrt/client.hpp"
#include "onloadrt/engine.hpp"
#include "onloadrt/errors.hpp"
#include "onloadrt/graph.hpp"
#include "onloadrt/link.hpp"
#include "onloadrt/model_io.hpp"
#include "onloadrt/packed_tensor.hpp"
#include "onloadrt/profiler.hpp"
#include "onloadrt/reference_model.hpp"
#include "onloadrt/rng.hpp"
#include "onloadrt/scheduler.hpp"
#include "onloadrt/server.hpp"
#include "onloadrt/sweep.hpp"
#include "onloadrt/synthetic.hpp"
#include "onloadrt/tensor.hpp"

using namespace onloadrt;
using nlohmann::json;

// ---- diagnostics ---------------------------------------------------------

// Short class name of an exception, so failures read "error (CorruptPayload): ...".
static std::string error_kind(const std::exception& e) {
  int status = 0;
  char* raw = abi::__cxa_demangle(typeid(e).name(), nullptr, nullptr, &status);
  std::string s = (status == 0 && raw) ? raw : typeid(e).name();
  std::free(raw);
  size_t pos = s.rfind("::");
  if (pos != std::string::npos) s = s.substr(pos + 2);
  return s;
}

static std::string fmt(double v, int prec = 3) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

static std::string fmt_digest(uint64_t d) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << d;
  return o.str();
}

// ---- config file ---------------------------------------------------------
//
// Optional JSON config, overridable by flags:
//   {
//     "links": { "lab": { "bits_per_s": 5e7, "latency_ms": 4.0 } },
//     "host": "127.0.0.1",
//     "port": 9000,
//     "hard": ["latency<=100"],
//     "soft": ["min:server_cost"]
//   }
// Link names from the config shadow the built-in presets.

struct CliConfig {
  std::map<std::string, LinkSpec> links;
  std::string host = "127.0.0.1";
  uint16_t port = 9000;
  std::vector<std::string> hard, soft;
};

static CliConfig load_cli_config(const std::string& path) {
  CliConfig cfg;
  for (const auto& [name, l] : link_presets()) cfg.links[name] = l;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw Error("cannot open config: " + path);
  json j = json::parse(f);
  if (j.contains("links")) {
    for (auto& [name, spec] : j.at("links").items()) {
      LinkSpec l;
      l.name = name;
      l.bandwidth_bits_per_s = spec.at("bits_per_s").get<double>();
      l.latency_ms = spec.value("latency_ms", 0.0);
      if (!(l.bandwidth_bits_per_s > 0) || l.latency_ms < 0)
        throw Error("config link '" + name +
                    "': bandwidth must be > 0 and latency >= 0");
      cfg.links[name] = l;
    }
  }
  if (j.contains("host")) cfg.host = j.at("host").get<std::string>();
  if (j.contains("port")) cfg.port = j.at("port").get<uint16_t>();
  if (j.contains("hard"))
    for (auto& s : j.at("hard")) cfg.hard.push_back(s.get<std::string>());
  if (j.contains("soft"))
    for (auto& s : j.at("soft")) cfg.soft.push_back(s.get<std::string>());
  return cfg;
}

// Link argument: config/preset name, or "BITS_PER_S:LATENCY_MS".
static LinkSpec resolve_link(const std::string& s, const CliConfig& cfg) {
  auto it = cfg.links.find(s);
  if (it != cfg.links.end()) return it->second;
  return parse_link(s);
}

// ---- argument resolution ---------------------------------------------------

static uint64_t parse_u64_arg(const std::string& s, const char* what) {
  try {
    size_t pos = 0;
    uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(std::string("bad ") + what + ": '" + s + "'");
  }
}

struct Model {
  DepGraph graph;
  Weights weights;
};

static Model resolve_model(const std::string& spec) {
  if (spec.rfind("ref:", 0) == 0) {
    uint64_t seed = parse_u64_arg(spec.substr(4), "reference model seed");
    ReferenceModel m = build_reference_model(seed);
    return {std::move(m.graph), std::move(m.weights)};
  }
  std::string base = spec;
  const std::string ext = ".model";
  if (base.size() > ext.size() &&
      base.compare(base.size() - ext.size(), ext.size(), ext) == 0)
    base.resize(base.size() - ext.size());
  Model m;
  m.graph = load_model(base + ".model");
  m.weights = load_weights(base + ".weights");
  return m;
}

static Tensor resolve_tensor(const std::string& spec) {
  if (spec.rfind("ref:", 0) == 0) {
    std::string rest = spec.substr(4);
    size_t colon = rest.find(':');
    uint64_t seed = parse_u64_arg(
        colon == std::string::npos ? rest : rest.substr(0, colon),
        "reference input seed");
    size_t index = colon == std::string::npos
                       ? 0
                       : parse_u64_arg(rest.substr(colon + 1),
                                       "reference input index");
    return reference_input(seed, index);
  }
  return load_tensor(spec);
}

// Seeded inputs in the model's input shape; the derivation matches the
// calibration inputs, so for ref:SEED models these equal reference_input().
static std::vector<Tensor> seeded_inputs(const DepGraph& g, uint64_t seed,
                                         size_t count) {
  const auto& shape = g.nodes[0].params.input_shape;
  std::vector<Tensor> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Rng rng(seed ^ (0xd1b54a32d192ed03ull * (i + 1)));
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = float(rng.normal());
    out.push_back(std::move(t));
  }
  return out;
}

static std::vector<uint32_t> parse_shape_arg(const std::string& s) {
  std::vector<uint32_t> shape;
  std::string tok;
  std::istringstream in(s);
  while (std::getline(in, tok, 'x'))
    shape.push_back(uint32_t(parse_u64_arg(tok, "shape dimension")));
  if (shape.empty()) throw Error("empty shape: '" + s + "'");
  return shape;
}

static std::vector<HardConstraint> parse_constraints(
    const std::vector<std::string>& ss) {
  std::vector<HardConstraint> out;
  for (const auto& s : ss) out.push_back(parse_constraint(s));
  return out;
}

static std::vector<SoftTarget> parse_targets(
    const std::vector<std::string>& ss) {
  std::vector<SoftTarget> out;
  for (const auto& s : ss) out.push_back(parse_target(s));
  return out;
}

static void check_profile_matches(const ProfileDB& db, const Model& m,
                                  const std::string& profile_path) {
  uint64_t d = model_digest(m.graph, m.weights);
  if (db.model_digest != d)
    throw VersionMismatch("profile " + profile_path + " was calibrated for " +
                          fmt_digest(db.model_digest) +
                          ", model digest is " + fmt_digest(d));
}

static std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open file: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
}

// ---- profile ---------------------------------------------------------------

struct ProfileOpts {
  std::string model, out, unit = "cpu";
  uint64_t seed = 0;
  uint32_t count = 16;
  bool all_splits = false;
  std::vector<uint32_t> bitwidths;
};

static void print_profile_table(const ProfileDB& db, const ProfileTable& t,
                                const char* title, int prec) {
  std::cout << "  " << title << " (rows: split, cols: bitwidth)\n";
  std::cout << "    split";
  for (uint8_t b : db.bitwidths)
    std::cout << std::setw(10)
              << (b == kPassthroughBits ? std::string("pass")
                                        : "b=" + std::to_string(int(b)));
  std::cout << "\n";
  for (size_t si = 0; si < db.splits.size(); ++si) {
    std::cout << "    " << std::setw(5) << db.splits[si];
    for (size_t bi = 0; bi < db.bitwidths.size(); ++bi)
      std::cout << std::setw(10) << fmt(t.at(si, bi), prec);
    std::cout << "\n";
  }
}

static void cmd_profile(const ProfileOpts& o, const CliConfig&) {
  Model m = resolve_model(o.model);
  auto relu = candidate_splits(m.graph, true);
  auto all = candidate_splits(m.graph, false);
  std::cout << "model digest: " << fmt_digest(model_digest(m.graph, m.weights))
            << "\n";
  std::cout << "candidate splits: " << relu.size() << " of " << all.size()
            << " (relu-only filter removes "
            << fmt(100.0 * (1.0 - double(relu.size()) / double(all.size())), 1)
            << "%)\n";

  CalibrationOptions opts;
  opts.seed = o.seed;
  opts.count = o.count;
  opts.unit = o.unit;
  if (o.all_splits) opts.splits = all;
  if (!o.bitwidths.empty()) {
    opts.bitwidths.clear();
    for (uint32_t b : o.bitwidths) {
      if (b > 16) throw RangeError("bitwidth must be 0 (passthrough) or 1..16");
      opts.bitwidths.push_back(uint8_t(b));
    }
  }
  ProfileDB db = calibrate(m.graph, m.weights, opts);
  save_profile(db, o.out);

  std::cout << "calibrated on " << o.count << " seeded inputs (seed " << o.seed
            << "), unit '" << o.unit << "'\n";
  std::cout << "deterministic tables (fixed by --seed):\n";
  print_profile_table(db, db.d_size_bytes, "d_size bytes on the wire", 1);
  print_profile_table(db, db.acc_delta_pp, "top-1 accuracy delta (pp)", 3);
  const auto& tl = db.t_layer_ms();
  double client_total = 0, server_total = 0;
  for (double v : tl) client_total += v;
  for (double v : db.t_server_ms) server_total += v;
  std::cout << "wall-clock timings (vary run to run):\n";
  std::cout << "  full client forward: " << fmt(client_total) << " ms\n";
  std::cout << "  full server forward: " << fmt(server_total) << " ms\n";
  print_profile_table(db, db.t_pack_ms, "t_pack ms", 3);
  std::cout << "wrote profile: " << o.out << "\n";
}

// ---- serve -----------------------------------------------------------------

struct ServeOpts {
  std::string model, host = "0.0.0.0";
  uint16_t port = 0;
};

namespace {
std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop.store(true); }
}  // namespace

static void cmd_serve(const ServeOpts& o, const CliConfig&) {
  Model m = resolve_model(o.model);
  InferenceServer server(m.graph, m.weights);
  server.start(o.port, o.host);
  std::cout << "model digest: " << fmt_digest(server.digest()) << "\n";
  std::cout << "listening on " << o.host << ":" << server.port() << "\n"
            << std::flush;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop.load())
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  server.stop();
  std::cout << "requests served: " << server.requests_served() << "\n";
}

// ---- infer -----------------------------------------------------------------

struct InferOpts {
  std::string model, input, host, profile, link;
  uint16_t port = 0;
  int64_t split = -1;
  uint32_t bitwidth = 0;
  std::vector<std::string> hard, soft;
};

static void cmd_infer(const InferOpts& o, const CliConfig& cfg) {
  Model m = resolve_model(o.model);
  Tensor input = resolve_tensor(o.input);

  std::optional<LinkSpec> link;
  if (!o.link.empty()) link = resolve_link(o.link, cfg);

  SplitConfig choice{};
  bool scheduled = false;
  Decision dec;
  if (!o.profile.empty()) {
    if (o.split >= 0)
      throw Error("pass either --split or --profile, not both");
    ProfileDB db = load_profile(o.profile);
    check_profile_matches(db, m, o.profile);
    if (!link)
      throw Error("--link is required to schedule from a profile "
                  "(it supplies the bandwidth/latency snapshot)");
    NetSnapshot net{link->latency_ms, link->bytes_per_s()};
    auto hard = parse_constraints(o.hard.empty() ? cfg.hard : o.hard);
    auto soft = parse_targets(o.soft.empty() ? cfg.soft : o.soft);
    if (soft.empty()) soft.push_back({Metric::latency, Goal::minimize, 0});
    dec = schedule(build_space(db), db, hard, soft, net, LoadState{}, false);
    choice = dec.config;
    scheduled = true;
    std::cout << "scheduled: split=" << choice.split << " bitwidth="
              << (choice.bitwidth == kPassthroughBits
                      ? std::string("passthrough")
                      : std::to_string(int(choice.bitwidth)))
              << (dec.best_effort ? " (best effort: constraints unsatisfiable)"
                                  : "")
              << ", " << dec.feasible_count << " feasible configs\n";
  } else {
    if (o.split < 0) throw Error("pass --split N or --profile FILE");
    if (o.split > m.graph.max_split())
      throw RangeError("--split must be in [0, " +
                       std::to_string(m.graph.max_split()) + "]");
    if (o.bitwidth > 16)
      throw RangeError("bitwidth must be 0 (passthrough) or 1..16");
    choice = {SplitPoint(o.split), uint8_t(o.bitwidth)};
  }

  RequestTiming t;
  Tensor logits;
  if (choice.split == m.graph.max_split()) {
    auto t0 = std::chrono::steady_clock::now();
    logits = forward_logits(m.graph, m.weights, input);
    t.device_ms = detail::ms_between(t0, std::chrono::steady_clock::now());
    t.total_ms = t.device_ms;
    std::cout << "client-only split: no network traffic\n";
  } else {
    std::string host = o.host.empty() ? cfg.host : o.host;
    uint16_t port = o.port == 0 ? cfg.port : o.port;
    ClientConnection conn(host, port, model_digest(m.graph, m.weights), link);
    std::cout << "connected to " << host << ":" << port << " (hello rtt "
              << fmt(conn.hello_rtt_ms()) << " ms)\n";
    logits = conn.infer(m.graph, m.weights, input, choice, &t);
  }

  std::cout << "timing breakdown (wall-clock):\n"
            << "  device:   " << fmt(t.device_ms) << " ms\n"
            << "  pack:     " << fmt(t.pack_ms) << " ms\n"
            << "  uplink:   " << fmt(t.uplink_ms) << " ms\n"
            << "  server:   " << fmt(t.server_ms) << " ms\n"
            << "  response: " << fmt(t.response_ms) << " ms\n"
            << "  total:    " << fmt(t.total_ms) << " ms\n"
            << "bytes: " << t.bytes_up << " up, " << t.bytes_down << " down\n";
  size_t cls = top1(logits);
  std::cout << "top-1 class: " << cls << " (logit "
            << fmt(logits.data[cls], 4) << ")\n";
  if (scheduled)
    std::cout << "predicted latency: " << fmt(dec.predicted.latency_ms)
              << " ms, measured: " << fmt(t.total_ms) << " ms\n";
}

// ---- run-pipelined ---------------------------------------------------------

constexpr const char* kRunSchema = "onloadrt.run.v1";

struct RunOpts {
  std::string model, profile, host, link, csv;
  uint16_t port = 0;
  uint64_t seed = 0;
  size_t count = 64, warmup = 8, batch = 0, distinct = 8;
  int64_t split = -1;
  uint32_t bitwidth = 0;
  std::vector<std::string> hard, soft;
  bool sequential = false;
};

static void print_run_report(const RunReport& r, const char* tag) {
  double win = r.completion_ms.empty() ? 1 : r.completion_ms.back();
  if (!(win > 0)) win = 1;
  std::cout << tag << ": " << r.completed << " done, "
            << fmt(r.throughput_rps, 2) << " req/s after warmup, mean latency "
            << fmt(r.mean_latency_ms, 2) << " ms\n";
  std::cout << "  stage occupancy: device " << fmt(r.device_busy_ms / win, 2)
            << ", network " << fmt(r.uplink_busy_ms / win, 2) << ", server "
            << fmt(r.server_busy_ms / win, 2) << "\n";
  std::cout << "  bytes: " << r.bytes_up << " up, " << r.bytes_down
            << " down\n";
}

static void cmd_run_pipelined(const RunOpts& o, const CliConfig& cfg) {
  Model m = resolve_model(o.model);
  std::optional<LinkSpec> link;
  if (!o.link.empty()) link = resolve_link(o.link, cfg);

  bool scheduling = !o.profile.empty();
  ProfileDB db;
  std::vector<HardConstraint> hard;
  std::vector<SoftTarget> soft;
  std::vector<SplitConfig> space;
  Decision dec;
  SplitConfig choice{};
  if (scheduling) {
    if (o.split >= 0)
      throw Error("pass either --split or --profile, not both");
    db = load_profile(o.profile);
    check_profile_matches(db, m, o.profile);
    if (!link)
      throw Error("--link is required to schedule from a profile");
    hard = parse_constraints(o.hard.empty() ? cfg.hard : o.hard);
    soft = parse_targets(o.soft.empty() ? cfg.soft : o.soft);
    if (soft.empty()) soft.push_back({Metric::throughput, Goal::maximize, 0});
    space = build_space(db);
    NetSnapshot net{link->latency_ms, link->bytes_per_s()};
    dec = schedule(space, db, hard, soft, net, LoadState{}, !o.sequential);
    choice = dec.config;
    std::cout << "scheduled: split=" << choice.split << " bitwidth="
              << (choice.bitwidth == kPassthroughBits
                      ? std::string("passthrough")
                      : std::to_string(int(choice.bitwidth)))
              << (dec.best_effort ? " (best effort)" : "") << ", predicted "
              << fmt(dec.predicted.throughput_rps, 2) << " req/s, "
              << fmt(dec.predicted.latency_ms, 2) << " ms latency\n";
  } else {
    if (o.split < 0) throw Error("pass --split N or --profile FILE");
    if (o.split > m.graph.max_split())
      throw RangeError("--split must be in [0, " +
                       std::to_string(m.graph.max_split()) + "]");
    choice = {SplitPoint(o.split), uint8_t(o.bitwidth)};
  }

  std::vector<Tensor> inputs = seeded_inputs(m.graph, o.seed, o.distinct);

  // No --host: host the server half in-process (loopback demo).
  std::unique_ptr<InferenceServer> inproc;
  std::string host = o.host;
  uint16_t port = o.port;
  if (host.empty()) {
    inproc = std::make_unique<InferenceServer>(m.graph, m.weights);
    inproc->start(0);
    host = "127.0.0.1";
    port = inproc->port();
    std::cout << "in-process server on 127.0.0.1:" << port << "\n";
  } else if (port == 0) {
    port = cfg.port;
  }
  ClientConnection conn(host, port, model_digest(m.graph, m.weights), link);

  // Feedback loop state: network estimator timeline and load scaling.
  auto t_start = std::chrono::steady_clock::now();
  auto now_ms = [&] {
    return detail::ms_between(t_start, std::chrono::steady_clock::now());
  };
  std::string link_type = link ? link->name : "measured";
  NetworkEstimate est;
  LoadState load;
  ScheduleInputsSnapshot prev{link ? link->bytes_per_s() : 0,
                              link ? link->latency_ms : 0, 1, 1};
  double deadline = 0;
  for (const HardConstraint& c : hard)
    if (c.metric == Metric::latency && c.op == Cmp::le) deadline = c.threshold;

  std::ofstream csv;
  if (!o.csv.empty()) {
    csv.open(o.csv);
    if (!csv) throw Error("cannot write csv: " + o.csv);
    csv << "schema,batch,request,split,bitwidth,completion_ms,latency_ms,"
           "top1\n";
  }

  size_t batch_size = o.batch == 0 ? o.count : o.batch;
  size_t done = 0;
  int batch_no = 0;
  RunReport total;
  while (done < o.count) {
    size_t n = std::min(batch_size, o.count - done);
    size_t wu = std::min(o.warmup, n >= 2 ? n - 2 : size_t(0));
    RunReport rep =
        o.sequential
            ? conn.run_sequential(m.graph, m.weights, inputs, choice, n, wu)
            : conn.run_pipelined(m.graph, m.weights, inputs, choice, n, wu);
    std::string tag = "batch " + std::to_string(batch_no);
    print_run_report(rep, tag.c_str());
    if (csv.is_open())
      for (size_t i = 0; i < rep.completed; ++i)
        csv << kRunSchema << ',' << batch_no << ',' << done + i << ','
            << choice.split << ',' << int(choice.bitwidth) << ','
            << fmt(rep.completion_ms[i]) << ',' << fmt(rep.latency_ms[i])
            << ',' << rep.top1_class[i] << "\n";
    done += n;
    ++batch_no;
    total.completed += rep.completed;
    total.bytes_up += rep.bytes_up;
    total.bytes_down += rep.bytes_down;

    if (!scheduling || done >= o.count || rep.completed == 0) continue;

    // Between batches: feed the profiler and reconsider the decision.
    double t = now_ms();
    double rtt = conn.ping();
    observe_transfer(est, link_type, 0, rtt / 2.0, t);
    if (rep.bytes_up > 0 && choice.split != m.graph.max_split())
      observe_transfer(est, link_type, double(rep.bytes_up) / rep.completed,
                       rep.uplink_busy_ms / rep.completed, t);
    conn.send_feedback(rep.server_busy_ms / rep.completed);

    ScheduleInputsSnapshot cur = prev;
    try {
      LinkEstimate e = best_estimate(est, t);
      if (e.has_bandwidth) cur.bandwidth_Bps = e.bandwidth_Bps;
      if (e.has_latency) cur.latency_ms = e.latency_ms;
    } catch (const NoEstimate&) {
    }
    size_t si = db.split_index(choice.split);
    size_t bi = db.bitwidth_index(choice.bitwidth);
    double off_dev = db.client_prefix_ms(choice.split) + db.t_pack_ms.at(si, bi);
    double off_srv = db.server_suffix_ms(choice.split);
    if (off_dev > 1e-9)
      cur.sf_client =
          scaling_factor(rep.device_busy_ms / rep.completed, off_dev);
    if (off_srv > 1e-9)
      cur.sf_server =
          scaling_factor(rep.server_busy_ms / rep.completed, off_srv);

    double worst = rep.latency_ms.empty()
                       ? 0
                       : *std::max_element(rep.latency_ms.begin(),
                                           rep.latency_ms.end());
    bool blown = deadline_blown(worst, deadline);
    if (should_reschedule(prev, cur) || blown) {
      load = {cur.sf_client, cur.sf_server};
      NetSnapshot net{cur.latency_ms, cur.bandwidth_Bps};
      Decision nd = schedule(space, db, hard, soft, net, load, !o.sequential);
      std::cout << "  rescheduling (" << (blown ? "deadline blown" : "drift")
                << "): split=" << nd.config.split << " bitwidth="
                << (nd.config.bitwidth == kPassthroughBits
                        ? std::string("passthrough")
                        : std::to_string(int(nd.config.bitwidth)))
                << (nd.config == choice ? " (unchanged)" : "") << "\n";
      dec = nd;
      choice = nd.config;
      prev = cur;
    }
  }
  std::cout << "total: " << total.completed << " requests, " << total.bytes_up
            << " bytes up, " << total.bytes_down << " bytes down\n";
  if (csv.is_open()) std::cout << "wrote per-request csv: " << o.csv << "\n";
}

// ---- sweep -----------------------------------------------------------------

struct SweepOpts {
  std::string profile, axis, out, link = "wifi", model;
  std::vector<double> points;
  std::vector<std::string> hard, soft, variants;
  bool live = false, sequential = false;
  uint64_t seed = 1;
  size_t live_count = 24, live_warmup = 4, distinct = 8;
  double sf_client = 1.0, sf_server = 1.0;
};

static Variant variant_from_name(const std::string& s) {
  for (Variant v : all_variants())
    if (s == variant_name(v)) return v;
  throw Error("unknown variant '" + s +
              "' (full, split_only, client_only, server_only)");
}

static void cmd_sweep(const SweepOpts& o, const CliConfig& cfg) {
  ProfileDB db = load_profile(o.profile);
  if (o.points.empty()) throw Error("--points must be non-empty");
  if (!std::is_sorted(o.points.begin(), o.points.end()))
    throw Error("--points must be sorted ascending");
  LinkSpec link = resolve_link(o.link, cfg);
  NetSnapshot net{link.latency_ms, link.bytes_per_s()};
  auto hard = parse_constraints(o.hard.empty() ? cfg.hard : o.hard);
  auto soft = parse_targets(o.soft.empty() ? cfg.soft : o.soft);
  std::vector<Variant> variants;
  if (o.variants.empty())
    variants = all_variants();
  else
    for (const auto& s : o.variants) variants.push_back(variant_from_name(s));
  bool pipelined = !o.sequential;
  LoadState load{o.sf_client, o.sf_server};

  std::vector<SweepRow> rows;
  if (o.axis == "bandwidth") {
    rows = bandwidth_sweep(db, o.points, link.latency_ms, variants, load,
                           hard, soft, pipelined);
  } else if (o.axis == "deadline") {
    rows = deadline_sweep(db, o.points, net, load, pipelined);
  } else if (o.axis == "client-slowdown") {
    rows = slowdown_sweep(db, o.points, net, variants, load, hard, soft,
                          pipelined);
  } else {
    throw Error("unknown axis '" + o.axis +
                "' (bandwidth, deadline, client-slowdown)");
  }

  if (o.live) {
    if (o.model.empty())
      throw Error("--live needs --model to execute configurations");
    if (o.axis == "client-slowdown" || o.sf_client != 1.0 ||
        o.sf_server != 1.0)
      throw Error("--live cannot be combined with load scaling: scaling "
                  "factors adjust predictions and cannot be imposed on the "
                  "real device");
    Model m = resolve_model(o.model);
    check_profile_matches(db, m, o.profile);
    std::vector<Tensor> inputs = seeded_inputs(m.graph, o.seed, o.distinct);
    for (SweepRow& r : rows) {
      LinkSpec rl = link;
      if (o.axis == "bandwidth") rl.bandwidth_bits_per_s = r.axis;
      RunReport rep = measure_live(m.graph, m.weights, inputs, rl, r.config,
                                   o.live_count, o.live_warmup, pipelined);
      r.live = true;
      r.live_latency_ms = rep.mean_latency_ms;
      r.live_throughput_rps = rep.throughput_rps;
    }
  }

  if (o.out.empty() || o.out == "-") {
    write_sweep_csv(std::cout, rows);
  } else {
    std::ofstream f(o.out);
    if (!f) throw Error("cannot write csv: " + o.out);
    write_sweep_csv(f, rows);
    std::cout << "wrote " << rows.size() << " rows to " << o.out << "\n";
  }
}

// ---- pack / unpack ---------------------------------------------------------

struct PackOpts {
  std::string input, out, codec = "lz4";
  uint32_t bitwidth = 8;
  uint32_t dep_id = 0;
};

static void cmd_pack(const PackOpts& o, const CliConfig&) {
  Tensor t = resolve_tensor(o.input);
  if (o.bitwidth > 16)
    throw RangeError("bitwidth must be 0 (passthrough) or 1..16");
  Codec codec;
  if (o.codec == "lz4")
    codec = Codec::lz4;
  else if (o.codec == "none")
    codec = Codec::none;
  else
    throw Error("unknown codec '" + o.codec + "' (lz4, none)");

  PackedTensor p = pack(t, PackingPolicy{uint8_t(o.bitwidth), codec}, o.dep_id);
  std::vector<uint8_t> blob = p.serialize();
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw Error("cannot write file: " + o.out);
  f.write(reinterpret_cast<const char*>(blob.data()),
          std::streamsize(blob.size()));

  Tensor u = unpack(p);
  double max_err = 0;
  for (size_t i = 0; i < t.data.size(); ++i)
    max_err = std::max(max_err, std::abs(double(u.data[i]) - t.data[i]));

  // Analytic reconstruction bound: half a quantization step plus 2 ULP at
  // the larger end of the value range. Exact for passthrough and constants.
  double bound = 0;
  if (p.bitwidth != kPassthroughBits && !p.constant) {
    auto [lo_it, hi_it] = std::minmax_element(t.data.begin(), t.data.end());
    float lo = *lo_it, hi = *hi_it;
    double half_step =
        0.5 * (double(hi) - double(lo)) / double((1u << p.bitwidth) - 1);
    float mag = std::max(std::abs(lo), std::abs(hi));
    double ulp =
        double(std::nextafterf(mag, std::numeric_limits<float>::infinity())) -
        double(mag);
    bound = half_step + 2.0 * ulp;
  }

  size_t raw = t.data.size() * sizeof(float);
  size_t zeros = 0;
  for (float v : t.data) zeros += v == 0.0f;
  std::cout << "input: shape " << shape_to_string(t.shape) << ", "
            << t.data.size() << " values, "
            << fmt(100.0 * double(zeros) / double(t.data.size()), 1)
            << "% zeros\n";
  std::cout << "raw bytes: " << raw << " (float32)\n";
  std::cout << "packed bytes: " << blob.size() << " (bitwidth "
            << (p.bitwidth == kPassthroughBits
                    ? std::string("passthrough")
                    : std::to_string(int(p.bitwidth)))
            << ", codec " << (p.codec == Codec::lz4 ? "lz4" : "none")
            << (p.constant ? ", constant" : "") << ")\n";
  std::cout << "compression ratio: " << fmt(double(raw) / double(blob.size()), 2)
            << "x\n";
  std::cout << "max reconstruction error: " << max_err << "\n";
  std::cout << "analytic bound: " << bound << "\n";
  if (max_err > bound)
    throw Error("reconstruction error " + std::to_string(max_err) +
                " exceeds the analytic bound " + std::to_string(bound));
  std::cout << "wrote packed tensor: " << o.out << "\n";
}

struct UnpackOpts {
  std::string input, out;
};

static void cmd_unpack(const UnpackOpts& o, const CliConfig&) {
  std::vector<uint8_t> blob = read_file_bytes(o.input);
  size_t consumed = 0;
  PackedTensor p = PackedTensor::parse(blob.data(), blob.size(), &consumed);
  if (consumed != blob.size())
    throw CorruptPayload("trailing bytes after packed tensor record: " +
                         std::to_string(blob.size() - consumed));
  Tensor t = unpack(p);
  save_tensor(t, o.out);
  auto [lo, hi] = std::minmax_element(t.data.begin(), t.data.end());
  std::cout << "packed tensor: dep_id " << p.dep_id << ", shape "
            << shape_to_string(p.shape) << ", bitwidth "
            << (p.bitwidth == kPassthroughBits
                    ? std::string("passthrough")
                    : std::to_string(int(p.bitwidth)))
            << ", codec " << (p.codec == Codec::lz4 ? "lz4" : "none")
            << (p.constant ? ", constant" : "") << "\n";
  std::cout << "payload: " << p.payload.size() << " bytes -> " << t.data.size()
            << " values in [" << fmt(*lo, 4) << ", " << fmt(*hi, 4) << "]\n";
  std::cout << "wrote tensor: " << o.out << "\n";
}

// ---- gen-tensor / export-model ----------------------------------------------

struct GenOpts {
  std::string out, shape = "3x32x32", kind = "normal";
  uint64_t seed = 0;
  double sparsity = 0.9;
  double lo = -1.0, hi = 1.0;
};

static void cmd_gen_tensor(const GenOpts& o, const CliConfig&) {
  std::vector<uint32_t> shape = parse_shape_arg(o.shape);
  Tensor t = Tensor::zeros(shape);
  Rng rng(o.seed);
  if (o.kind == "normal") {
    t.data = normal_values(rng, t.numel());
  } else if (o.kind == "sparse") {
    t.data = sparse_activation(rng, t.numel(), o.sparsity);
  } else if (o.kind == "uniform") {
    t.data = dense_uniform(rng, t.numel(), float(o.lo), float(o.hi));
  } else {
    throw Error("unknown kind '" + o.kind + "' (normal, sparse, uniform)");
  }
  save_tensor(t, o.out);
  size_t zeros = 0;
  for (float v : t.data) zeros += v == 0.0f;
  std::cout << "wrote " << o.kind << " tensor: " << o.out << ", shape "
            << shape_to_string(shape) << ", "
            << fmt(100.0 * double(zeros) / double(t.numel()), 1)
            << "% zeros\n";
}

struct ExportOpts {
  std::string model, out;
};

static void cmd_export_model(const ExportOpts& o, const CliConfig&) {
  Model m = resolve_model(o.model);
  save_model(m.graph, o.out + ".model");
  save_weights(m.weights, o.out + ".weights");
  std::cout << "model digest: " << fmt_digest(model_digest(m.graph, m.weights))
            << "\n";
  std::cout << "wrote " << o.out << ".model (" << m.graph.num_nodes()
            << " nodes) and " << o.out << ".weights\n";
}

// ---- main ------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"split CNN inference with input-specific activation packing"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON config: link definitions, default host/port, default "
                 "constraints/targets; flags override it");

  auto po = std::make_shared<ProfileOpts>();
  CLI::App* profile = app.add_subcommand(
      "profile", "calibrate a model and write a profile file");
  profile->add_option("model", po->model, "model prefix or ref:SEED")
      ->required();
  profile->add_option("--out", po->out, "profile output path")->required();
  profile->add_option("--seed", po->seed, "calibration input seed")
      ->required();
  profile->add_option("--count", po->count, "number of calibration inputs");
  profile->add_option("--unit", po->unit, "client processing-unit tag");
  profile->add_flag("--all-splits", po->all_splits,
                    "profile every split, not just relu-output cuts");
  profile->add_option("--bitwidths", po->bitwidths,
                      "bitwidth columns (0 = passthrough)")
      ->delimiter(',');

  auto so = std::make_shared<ServeOpts>();
  CLI::App* serve =
      app.add_subcommand("serve", "host the server half of a split model");
  serve->add_option("model", so->model, "model prefix or ref:SEED")
      ->required();
  serve->add_option("--host", so->host, "bind address");
  serve->add_option("--port", so->port, "port (0 = ephemeral)");

  auto io = std::make_shared<InferOpts>();
  CLI::App* infer = app.add_subcommand(
      "infer", "run one inference at a fixed or scheduled configuration");
  infer->add_option("model", io->model, "model prefix or ref:SEED")
      ->required();
  infer->add_option("--input", io->input, "tensor file or ref:SEED[:INDEX]")
      ->required();
  infer->add_option("--host", io->host, "server host");
  infer->add_option("--port", io->port, "server port");
  infer->add_option("--split", io->split, "fixed split point");
  infer->add_option("--bitwidth", io->bitwidth,
                    "fixed bitwidth (0 = passthrough)");
  infer->add_option("--profile", io->profile,
                    "profile file: schedule instead of fixing the config");
  infer->add_option("--link", io->link,
                    "emulated link: preset/config name or BITS_PER_S:LAT_MS");
  infer->add_option("--hard", io->hard,
                    "hard constraint, e.g. latency<=100 (repeatable)");
  infer->add_option("--soft", io->soft,
                    "soft target, e.g. min:latency (repeatable)");

  auto ro = std::make_shared<RunOpts>();
  CLI::App* run = app.add_subcommand(
      "run-pipelined",
      "sustained pipelined run with feedback-driven rescheduling");
  run->add_option("model", ro->model, "model prefix or ref:SEED")->required();
  run->add_option("--seed", ro->seed, "input stream seed")->required();
  run->add_option("--count", ro->count, "total requests");
  run->add_option("--warmup", ro->warmup, "requests excluded from throughput");
  run->add_option("--batch", ro->batch,
                  "requests per batch (rescheduling happens between batches; "
                  "0 = one batch)");
  run->add_option("--distinct", ro->distinct, "distinct inputs to cycle");
  run->add_option("--host", ro->host,
                  "server host (omit to host the server in-process)");
  run->add_option("--port", ro->port, "server port");
  run->add_option("--split", ro->split, "fixed split point");
  run->add_option("--bitwidth", ro->bitwidth,
                  "fixed bitwidth (0 = passthrough)");
  run->add_option("--profile", ro->profile, "profile file for scheduling");
  run->add_option("--link", ro->link, "emulated link");
  run->add_option("--hard", ro->hard, "hard constraint (repeatable)");
  run->add_option("--soft", ro->soft, "soft target (repeatable)");
  run->add_option("--csv", ro->csv, "per-request csv output path");
  run->add_flag("--sequential", ro->sequential,
                "disable pipelining (one request at a time)");

  auto wo = std::make_shared<SweepOpts>();
  CLI::App* sweep = app.add_subcommand(
      "sweep", "sweep the decision space along one axis and emit csv");
  sweep->add_option("--profile", wo->profile, "profile file")->required();
  sweep
      ->add_option("--axis", wo->axis,
                   "sweep axis: bandwidth (bits/s), deadline (ms), "
                   "client-slowdown (factor)")
      ->required();
  sweep->add_option("--points", wo->points, "axis values, sorted ascending")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", wo->out, "csv output path (- = stdout)");
  sweep->add_option("--link", wo->link,
                    "link supplying latency (and bandwidth off-axis)");
  sweep->add_option("--hard", wo->hard, "hard constraint (repeatable)");
  sweep->add_option("--soft", wo->soft, "soft target (repeatable)");
  sweep->add_option("--variants", wo->variants,
                    "variants to tabulate (default: all)")
      ->delimiter(',');
  sweep->add_flag("--live", wo->live,
                  "also measure each row on an in-process server");
  sweep->add_flag("--sequential", wo->sequential,
                  "predict/measure without pipelining");
  sweep->add_option("--model", wo->model, "model for --live runs");
  sweep->add_option("--seed", wo->seed, "input seed for --live runs");
  sweep->add_option("--live-count", wo->live_count, "requests per live row");
  sweep->add_option("--live-warmup", wo->live_warmup,
                    "warmup requests per live row");
  sweep->add_option("--sf-client", wo->sf_client,
                    "client load scaling factor applied to predictions");
  sweep->add_option("--sf-server", wo->sf_server,
                    "server load scaling factor applied to predictions");

  auto ko = std::make_shared<PackOpts>();
  CLI::App* pk = app.add_subcommand(
      "pack", "quantize + shuffle + compress a tensor file");
  pk->add_option("input", ko->input, "tensor file or ref:SEED[:INDEX]")
      ->required();
  pk->add_option("--out", ko->out, "packed output path")->required();
  pk->add_option("--bitwidth", ko->bitwidth,
                 "quantization bitwidth (0 = passthrough)")
      ->required();
  pk->add_option("--codec", ko->codec, "payload codec: lz4 or none");
  pk->add_option("--dep-id", ko->dep_id, "dependency id stamped on the record");

  auto uo = std::make_shared<UnpackOpts>();
  CLI::App* up = app.add_subcommand(
      "unpack", "decode a packed tensor file back to a tensor file");
  up->add_option("input", uo->input, "packed tensor file")->required();
  up->add_option("--out", uo->out, "tensor output path")->required();

  auto go = std::make_shared<GenOpts>();
  CLI::App* gen = app.add_subcommand(
      "gen-tensor", "write a seeded synthetic tensor file");
  gen->add_option("--out", go->out, "tensor output path")->required();
  gen->add_option("--seed", go->seed, "rng seed")->required();
  gen->add_option("--shape", go->shape, "shape, e.g. 3x32x32");
  gen->add_option("--kind", go->kind, "normal, sparse or uniform");
  gen->add_option("--sparsity", go->sparsity,
                  "zero fraction floor for --kind sparse");
  gen->add_option("--lo", go->lo, "lower bound for --kind uniform");
  gen->add_option("--hi", go->hi, "upper bound for --kind uniform");

  auto eo = std::make_shared<ExportOpts>();
  CLI::App* ex = app.add_subcommand(
      "export-model", "write a model out as .model/.weights files");
  ex->add_option("model", eo->model, "model prefix or ref:SEED")->required();
  ex->add_option("--out", eo->out, "output path prefix")->required();

  profile->callback([&] { cmd_profile(*po, load_cli_config(config_path)); });
  serve->callback([&] { cmd_serve(*so, load_cli_config(config_path)); });
  infer->callback([&] { cmd_infer(*io, load_cli_config(config_path)); });
  run->callback([&] { cmd_run_pipelined(*ro, load_cli_config(config_path)); });
  sweep->callback([&] { cmd_sweep(*wo, load_cli_config(config_path)); });
  pk->callback([&] { cmd_pack(*ko, load_cli_config(config_path)); });
  up->callback([&] { cmd_unpack(*uo, load_cli_config(config_path)); });
  gen->callback([&] { cmd_gen_tensor(*go, load_cli_config(config_path)); });
  ex->callback([&] { cmd_export_model(*eo, load_cli_config(config_path)); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error (" << error_kind(e) << "): " << e.what() << "\n";
    return 1;
  }
  return 0;
}
