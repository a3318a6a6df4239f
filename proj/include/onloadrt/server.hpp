#pragma once

// Inference server: owns the full model and finishes split executions.
//
// One thread per connection; model execution itself is serialized by a
// mutex, so the server behaves as a single compute resource (my server
// compute times then add up the way the scheduler's stage model assumes).
//
// Failure policy per connection:
//   - frames that are not this protocol at all (bad magic/version): close;
//   - well-framed but structurally invalid bodies: error response, keep
//     the connection;
//   - digest mismatch in the handshake: answer hello (so the client can
//     diagnose), then close.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "model_io.hpp"
#include "socket.hpp"
#include "wire.hpp"

namespace onloadrt {

class InferenceServer {
 public:
  InferenceServer(DepGraph g, Weights w)
      : graph_(std::move(g)),
        weights_(std::move(w)),
        digest_(model_digest(graph_, weights_)) {}

  ~InferenceServer() { stop(); }

  void start(uint16_t port = 0, const std::string& bind_host = "0.0.0.0") {
    listener_ = std::make_unique<Listener>(port, bind_host);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  uint16_t port() const { return listener_->port(); }
  uint64_t digest() const { return digest_; }
  size_t requests_served() const { return served_.load(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    if (listener_) listener_->close();
    {
      std::lock_guard<std::mutex> lk(conns_mutex_);
      for (Socket& s : conns_) s.shutdown_both();
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (std::thread& t : conn_threads_)
      if (t.joinable()) t.join();
  }

 private:
  void accept_loop() {
    for (;;) {
      Socket sock = listener_->accept();
      if (!sock.valid()) return;  // listener closed
      std::lock_guard<std::mutex> lk(conns_mutex_);
      if (stopping_) return;
      conns_.push_back(std::move(sock));
      auto it = std::prev(conns_.end());
      conn_threads_.emplace_back([this, it] {
        serve_connection(*it);
        // Dropping the socket here (not at stop()) lets peers of rejected
        // streams observe the close promptly.
        std::lock_guard<std::mutex> inner(conns_mutex_);
        conns_.erase(it);
      });
    }
  }

  void serve_connection(Socket& sock) {
    try {
      for (;;) {
        auto frame = sock.recv_frame();
        if (!frame) return;  // clean close
        if (!frame_header_plausible(*frame)) return;  // not our protocol

        WireMessage msg;
        try {
          msg = WireMessage::parse(*frame);
        } catch (const Error&) {
          // Header said "ours" but the body does not parse: report and
          // keep the stream alive (framing is still trustworthy).
          sock.send_frame(make_error_response(0).serialize());
          continue;
        }

        switch (msg.type) {
          case MsgType::hello: {
            WireMessage reply;
            reply.type = MsgType::hello;
            reply.request_id = msg.request_id;
            reply.digest = digest_;
            sock.send_frame(reply.serialize());
            if (msg.digest != digest_) return;  // incompatible model
            break;
          }
          case MsgType::infer_request:
            handle_infer(sock, msg);
            break;
          case MsgType::profile_feedback:
            break;  // informational; nothing to answer
          case MsgType::infer_response:
            // A server never consumes responses: protocol misuse.
            sock.send_frame(make_error_response(msg.request_id).serialize());
            break;
        }
      }
    } catch (const NetworkError&) {
      // Peer vanished mid-frame; connection thread just winds down.
    } catch (const Error&) {
    }
  }

  void handle_infer(Socket& sock, const WireMessage& msg) {
    using clock = std::chrono::steady_clock;
    try {
      if (msg.split_id >= graph_.max_split())
        throw RangeError("split id out of range for serving");
      auto deps = split_dependencies(graph_, msg.split_id);
      if (msg.tensors.size() != deps.size())
        throw MalformedMessage("request tensor set does not match the split");

      ExecPlan plan{msg.split_id + 1, graph_.max_split(), {},
                    {graph_.output_id()}};
      for (const PackedTensor& p : msg.tensors)
        plan.inject.emplace(p.dep_id, unpack(p));
      for (uint32_t d : deps)
        if (!plan.inject.count(d))
          throw MalformedMessage("request is missing dependency tensor " +
                                 std::to_string(d));

      Tensor logits;
      double elapsed;
      {
        std::lock_guard<std::mutex> lk(model_mutex_);
        auto t0 = clock::now();
        ExecResult r = execute(graph_, weights_, plan);
        elapsed =
            std::chrono::duration<double, std::milli>(clock::now() - t0)
                .count();
        logits = std::move(r.outputs.at(graph_.output_id()));
      }

      WireMessage reply;
      reply.type = MsgType::infer_response;
      reply.request_id = msg.request_id;
      reply.split_id = msg.split_id;
      // Return path stays uncompressed: logits are tiny and the cost of a
      // codec round-trip outweighs the bytes saved.
      reply.tensors.push_back(
          pack(logits, {kPassthroughBits, Codec::none}, graph_.output_id()));
      reply.server_ms = static_cast<float>(elapsed);
      sock.send_frame(reply.serialize());
      ++served_;
    } catch (const Error&) {
      sock.send_frame(make_error_response(msg.request_id).serialize());
    }
  }

  DepGraph graph_;
  Weights weights_;
  uint64_t digest_;

  std::unique_ptr<Listener> listener_;
  std::thread accept_thread_;
  std::mutex model_mutex_;
  std::mutex conns_mutex_;
  std::list<Socket> conns_;
  std::vector<std::thread> conn_threads_;
  std::atomic<bool> stopping_{false};
  std::atomic<size_t> served_{0};
};

}  // namespace onloadrt
