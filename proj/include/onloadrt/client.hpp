#pragma once

// Client-side runtime: runs the model prefix locally, ships the packed
// crossing tensors to an inference server, and reassembles logits from the
// response. Offers one-shot synchronous requests plus sequential and
// pipelined drivers over a batch of inputs.

#include <chrono>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "link.hpp"
#include "model_io.hpp"
#include "packed_tensor.hpp"
#include "pipeline.hpp"
#include "scheduler.hpp"
#include "socket.hpp"
#include "wire.hpp"

namespace onloadrt {

struct RequestTiming {
  double device_ms = 0;    // prefix execution
  double pack_ms = 0;      // quantize + shuffle + codec + serialize
  double uplink_ms = 0;    // emulated occupancy plus the real send
  double server_ms = 0;    // reported by the server
  double response_ms = 0;  // send-complete to delivered response
  double total_ms = 0;
  size_t bytes_up = 0;
  size_t bytes_down = 0;
};

// Outcome of a batch run (either driver).
struct RunReport {
  size_t completed = 0;
  size_t warmup = 0;
  double throughput_rps = 0;  // completions/s after the warmup prefix
  double window_ms = 0;
  double mean_latency_ms = 0;
  double device_busy_ms = 0;  // prefix + pack work
  double uplink_busy_ms = 0;
  double server_busy_ms = 0;
  size_t bytes_up = 0;
  size_t bytes_down = 0;
  std::vector<double> latency_ms;     // per request
  std::vector<double> completion_ms;  // per request, from run start
  std::vector<int> top1_class;        // per request
};

namespace detail {

inline double ms_between(std::chrono::steady_clock::time_point a,
                         std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

inline void finish_report(RunReport& rep) {
  rep.completed = rep.completion_ms.size();
  rep.throughput_rps = throughput_after_warmup(rep.completion_ms, rep.warmup);
  if (rep.completed >= rep.warmup + 2)
    rep.window_ms = rep.completion_ms.back() - rep.completion_ms[rep.warmup];
  double sum = 0;
  for (double v : rep.latency_ms) sum += v;
  if (!rep.latency_ms.empty())
    rep.mean_latency_ms = sum / double(rep.latency_ms.size());
}

}  // namespace detail

// Everything on the client: no connection, no packing. Used for the pure
// client split and as the baseline the offload runs are judged against.
inline RunReport run_local(const DepGraph& g, const Weights& w,
                           const std::vector<Tensor>& inputs, size_t count,
                           size_t warmup) {
  using clock = std::chrono::steady_clock;
  RunReport rep;
  rep.warmup = warmup;
  if (inputs.empty() || count == 0) return rep;
  const auto t0 = clock::now();
  for (size_t i = 0; i < count; ++i) {
    auto s = clock::now();
    Tensor logits = forward_logits(g, w, inputs[i % inputs.size()]);
    auto e = clock::now();
    rep.device_busy_ms += detail::ms_between(s, e);
    rep.latency_ms.push_back(detail::ms_between(s, e));
    rep.completion_ms.push_back(detail::ms_between(t0, e));
    rep.top1_class.push_back(static_cast<int>(top1(logits)));
  }
  detail::finish_report(rep);
  return rep;
}

class ClientConnection {
 public:
  // Connects and verifies the peer serves the same model (by digest).
  ClientConnection(const std::string& host, uint16_t port, uint64_t digest,
                   std::optional<LinkSpec> link = std::nullopt)
      : sock_(connect_tcp(host, port)), link_(std::move(link)),
        digest_(digest) {
    hello_rtt_ms_ = ping();
  }

  // Hello round trip under link emulation; doubles as a latency probe.
  double ping() {
    using clock = std::chrono::steady_clock;
    WireMessage hello;
    hello.type = MsgType::hello;
    hello.request_id = next_id_++;
    hello.digest = digest_;
    auto body = hello.serialize();
    auto t0 = clock::now();
    if (link_) emulate_send_delay(*link_, body.size() + 4);
    sock_.send_frame(body);
    auto frame = sock_.recv_frame();
    if (!frame) throw NetworkError("server closed during handshake");
    if (link_)
      std::this_thread::sleep_until(
          emulated_arrival(*link_, clock::now(), frame->size() + 4));
    WireMessage reply = WireMessage::parse(*frame);
    if (reply.type != MsgType::hello)
      throw MalformedMessage("expected a hello reply");
    if (reply.digest != digest_)
      throw VersionMismatch("server model digest does not match ours");
    return detail::ms_between(t0, clock::now());
  }

  double hello_rtt_ms() const { return hello_rtt_ms_; }
  const std::optional<LinkSpec>& link() const { return link_; }

  // Lets the server know what we measured; the server may ignore it.
  void send_feedback(double observed_ms) {
    WireMessage msg;
    msg.type = MsgType::profile_feedback;
    msg.request_id = next_id_++;
    msg.server_ms = static_cast<float>(observed_ms);
    sock_.send_frame(msg.serialize());
  }

  // One synchronous request: [0..split] here, the rest on the server.
  // The pure client split never touches the socket.
  Tensor infer(const DepGraph& g, const Weights& w, const Tensor& input,
               SplitConfig cfg, RequestTiming* timing = nullptr) {
    using clock = std::chrono::steady_clock;
    RequestTiming t;
    if (cfg.split == g.max_split()) {
      auto t0 = clock::now();
      Tensor logits = forward_logits(g, w, input);
      t.device_ms = t.total_ms = detail::ms_between(t0, clock::now());
      if (timing) *timing = t;
      return logits;
    }

    const auto t_start = clock::now();
    auto deps = split_dependencies(g, cfg.split);
    ExecPlan prefix{0, cfg.split, {}, deps};
    ExecResult pr = execute(g, w, prefix, &input);
    const auto t_exec = clock::now();
    t.device_ms = detail::ms_between(t_start, t_exec);

    PackingPolicy policy{cfg.bitwidth, Codec::lz4};
    WireMessage msg;
    msg.type = MsgType::infer_request;
    msg.request_id = next_id_++;
    msg.split_id = cfg.split;
    for (uint32_t d : deps)
      msg.tensors.push_back(pack(pr.outputs.at(d), policy, d));
    auto body = msg.serialize();
    const auto t_pack = clock::now();
    t.pack_ms = detail::ms_between(t_exec, t_pack);
    t.bytes_up = body.size() + 4;

    if (link_) emulate_send_delay(*link_, t.bytes_up);
    sock_.send_frame(body);
    const auto t_sent = clock::now();
    t.uplink_ms = detail::ms_between(t_pack, t_sent);

    auto frame = sock_.recv_frame();
    if (!frame) throw NetworkError("server closed mid-request");
    t.bytes_down = frame->size() + 4;
    if (link_)
      std::this_thread::sleep_until(
          emulated_arrival(*link_, clock::now(), t.bytes_down));
    WireMessage reply = WireMessage::parse(*frame);
    if (reply.is_error())
      throw ServerError("server reported a request failure");
    if (reply.type != MsgType::infer_response ||
        reply.request_id != msg.request_id || reply.tensors.size() != 1)
      throw MalformedMessage("unexpected reply to an inference request");
    Tensor logits = unpack(reply.tensors[0]);
    const auto t_end = clock::now();
    t.server_ms = reply.server_ms;
    t.response_ms = detail::ms_between(t_sent, t_end);
    t.total_ms = detail::ms_between(t_start, t_end);
    if (timing) *timing = t;
    return logits;
  }

  // Requests one at a time; each waits for its response.
  RunReport run_sequential(const DepGraph& g, const Weights& w,
                           const std::vector<Tensor>& inputs, SplitConfig cfg,
                           size_t count, size_t warmup) {
    using clock = std::chrono::steady_clock;
    RunReport rep;
    rep.warmup = warmup;
    if (inputs.empty() || count == 0) return rep;
    const auto t0 = clock::now();
    for (size_t i = 0; i < count; ++i) {
      RequestTiming t;
      Tensor logits = infer(g, w, inputs[i % inputs.size()], cfg, &t);
      rep.latency_ms.push_back(t.total_ms);
      rep.completion_ms.push_back(detail::ms_between(t0, clock::now()));
      rep.top1_class.push_back(static_cast<int>(top1(logits)));
      rep.device_busy_ms += t.device_ms + t.pack_ms;
      rep.uplink_busy_ms += t.uplink_ms;
      rep.server_busy_ms += t.server_ms;
      rep.bytes_up += t.bytes_up;
      rep.bytes_down += t.bytes_down;
    }
    detail::finish_report(rep);
    return rep;
  }

  // Overlapping driver: prefix+pack, uplink, and the server work on
  // different requests at once. Stage chain per request:
  //   device thread  -> (queue) -> uplink thread -> server
  //   receive thread stamps real arrivals        -> delivery on the caller
  // The receive thread never sleeps, so emulated response shifts are
  // anchored to true arrival times and do not queue behind each other.
  RunReport run_pipelined(const DepGraph& g, const Weights& w,
                          const std::vector<Tensor>& inputs, SplitConfig cfg,
                          size_t count, size_t warmup) {
    using clock = std::chrono::steady_clock;
    if (cfg.split == g.max_split())
      return run_local(g, w, inputs, count, warmup);
    RunReport rep;
    rep.warmup = warmup;
    if (inputs.empty() || count == 0) return rep;

    struct DevItem {
      size_t item;
      std::vector<uint8_t> frame;
      clock::time_point entered;
    };
    struct SentRec {
      size_t item;
      clock::time_point entered;
    };
    struct RecvRec {
      std::vector<uint8_t> frame;
      clock::time_point received_at;
    };

    auto deps = split_dependencies(g, cfg.split);
    PackingPolicy policy{cfg.bitwidth, Codec::lz4};
    policy.validate();

    BoundedQueue<DevItem> q_dev(2);
    BoundedQueue<SentRec> q_sent(count + 1);
    BoundedQueue<RecvRec> q_recv(count + 1);

    std::mutex err_m;
    std::exception_ptr first_err;
    auto fail = [&](std::exception_ptr e) {
      {
        std::lock_guard<std::mutex> lk(err_m);
        if (!first_err) first_err = e;
      }
      sock_.shutdown_both();
      q_dev.close();
      q_sent.close();
      q_recv.close();
    };

    std::thread device([&] {
      try {
        for (size_t i = 0; i < count; ++i) {
          auto entered = clock::now();
          ExecPlan prefix{0, cfg.split, {}, deps};
          ExecResult pr =
              execute(g, w, prefix, &inputs[i % inputs.size()]);
          WireMessage msg;
          msg.type = MsgType::infer_request;
          msg.request_id = i;
          msg.split_id = cfg.split;
          for (uint32_t d : deps)
            msg.tensors.push_back(pack(pr.outputs.at(d), policy, d));
          DevItem it{i, msg.serialize(), entered};
          rep.device_busy_ms += detail::ms_between(entered, clock::now());
          if (!q_dev.push(std::move(it))) return;
        }
        q_dev.close();
      } catch (...) {
        fail(std::current_exception());
      }
    });

    std::thread uplink([&] {
      try {
        while (auto it = q_dev.pop()) {
          auto t0 = clock::now();
          if (link_) emulate_send_delay(*link_, it->frame.size() + 4);
          sock_.send_frame(it->frame);
          rep.uplink_busy_ms += detail::ms_between(t0, clock::now());
          rep.bytes_up += it->frame.size() + 4;
          if (!q_sent.push({it->item, it->entered})) return;
        }
        q_sent.close();
      } catch (...) {
        fail(std::current_exception());
      }
    });

    std::thread receiver([&] {
      try {
        for (size_t r = 0; r < count; ++r) {
          auto frame = sock_.recv_frame();
          if (!frame) throw NetworkError("server closed mid-run");
          RecvRec rec{std::move(*frame), clock::now()};
          if (!q_recv.push(std::move(rec))) return;
        }
        q_recv.close();
      } catch (...) {
        fail(std::current_exception());
      }
    });

    std::exception_ptr delivery_err;
    const auto t0 = clock::now();
    try {
      for (size_t done = 0; done < count; ++done) {
        auto sent = q_sent.pop();
        if (!sent) break;
        auto rcv = q_recv.pop();
        if (!rcv) break;
        size_t nbytes = rcv->frame.size() + 4;
        if (link_)
          std::this_thread::sleep_until(
              emulated_arrival(*link_, rcv->received_at, nbytes));
        WireMessage reply = WireMessage::parse(rcv->frame);
        if (reply.is_error())
          throw ServerError("server reported a request failure");
        if (reply.type != MsgType::infer_response ||
            reply.request_id != sent->item || reply.tensors.size() != 1)
          throw MalformedMessage("responses out of step with requests");
        Tensor logits = unpack(reply.tensors[0]);
        auto e = clock::now();
        rep.bytes_down += nbytes;
        rep.server_busy_ms += reply.server_ms;
        rep.completion_ms.push_back(detail::ms_between(t0, e));
        rep.latency_ms.push_back(detail::ms_between(sent->entered, e));
        rep.top1_class.push_back(static_cast<int>(top1(logits)));
      }
    } catch (...) {
      delivery_err = std::current_exception();
      fail(delivery_err);
    }

    device.join();
    uplink.join();
    receiver.join();
    if (delivery_err) std::rethrow_exception(delivery_err);
    {
      std::lock_guard<std::mutex> lk(err_m);
      if (first_err) std::rethrow_exception(first_err);
    }
    detail::finish_report(rep);
    return rep;
  }

 private:
  Socket sock_;
  std::optional<LinkSpec> link_;
  uint64_t digest_ = 0;
  uint64_t next_id_ = 0;
  double hello_rtt_ms_ = 0;
};

}  // namespace onloadrt
