#include "onloadrt/server.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <atomic>
#include <chrono>
#include <thread>

#include "onloadrt/client.hpp"
#include "onloadrt/link.hpp"
#include "onloadrt/pipeline.hpp"
#include "onloadrt/reference_model.hpp"
#include "onloadrt/sweep.hpp"
#include "onloadrt/wire.hpp"
#include "support/toy_profile.hpp"

using namespace onloadrt;

namespace {

void sleep_ms(double ms) {
  std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

}  // namespace

TEST_CASE("wire messages serialize to the documented layout", "[wire]") {
  SECTION("hello golden bytes") {
    WireMessage m;
    m.type = MsgType::hello;
    m.request_id = 7;
    m.digest = 0x1122334455667788ull;
    std::vector<uint8_t> expect = {
        'D', 'Y', 'N', 'O', 0x01, 0x04,
        0x07, 0, 0, 0, 0, 0, 0, 0,        // request id
        0, 0, 0, 0,                       // split id
        0, 0,                             // tensor count
        0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11};
    REQUIRE(m.serialize() == expect);
    WireMessage back = WireMessage::parse(expect);
    REQUIRE(back.type == MsgType::hello);
    REQUIRE(back.request_id == 7);
    REQUIRE(back.digest == 0x1122334455667788ull);
  }

  SECTION("response with a tensor and a server-time trailer") {
    Tensor t({2, 2}, {1.0f, -2.0f, 0.5f, 4.0f});
    WireMessage m;
    m.type = MsgType::infer_response;
    m.request_id = 42;
    m.split_id = 9;
    m.tensors.push_back(pack(t, {kPassthroughBits, Codec::none}, 19));
    m.server_ms = 3.25f;
    WireMessage back = WireMessage::parse(m.serialize());
    REQUIRE(back.request_id == 42);
    REQUIRE(back.split_id == 9);
    REQUIRE(back.tensors.size() == 1);
    REQUIRE(back.server_ms == 3.25f);
    REQUIRE_FALSE(back.is_error());
    Tensor u = unpack(back.tensors[0]);
    REQUIRE(u.data == t.data);
  }

  SECTION("error response marker") {
    WireMessage e = make_error_response(13);
    REQUIRE(e.is_error());
    REQUIRE(WireMessage::parse(e.serialize()).is_error());
  }

  SECTION("parse failures") {
    WireMessage m;
    m.type = MsgType::hello;
    auto good = m.serialize();

    auto bad_magic = good;
    bad_magic[0] = 'X';
    REQUIRE_THROWS_AS(WireMessage::parse(bad_magic), MalformedMessage);

    auto bad_version = good;
    bad_version[4] = 2;
    REQUIRE_THROWS_AS(WireMessage::parse(bad_version), VersionMismatch);

    auto bad_type = good;
    bad_type[5] = 9;
    REQUIRE_THROWS_AS(WireMessage::parse(bad_type), MalformedMessage);

    auto trailing = good;
    trailing.push_back(0);
    REQUIRE_THROWS_AS(WireMessage::parse(trailing), MalformedMessage);

    auto truncated = good;
    truncated.resize(truncated.size() - 3);
    REQUIRE_THROWS_AS(WireMessage::parse(truncated), MalformedMessage);
  }

  SECTION("header plausibility for the close-vs-report decision") {
    WireMessage m;
    auto good = m.serialize();
    REQUIRE(frame_header_plausible(good));
    auto bad = good;
    bad[4] = 9;
    REQUIRE_FALSE(frame_header_plausible(bad));
    REQUIRE_FALSE(frame_header_plausible({'D', 'Y', 'N'}));
    REQUIRE_FALSE(
        frame_header_plausible({'X', 'Y', 'Z', 'W', 1, 1, 0, 0, 0, 0}));
  }
}

TEST_CASE("link math matches the presets", "[link]") {
  const auto& presets = link_presets();
  REQUIRE(presets.at("ethernet").bandwidth_bits_per_s == 1e9);
  REQUIRE(presets.at("ethernet").latency_ms == 0.5);
  REQUIRE(presets.at("wifi").bandwidth_bits_per_s == 400e6);
  REQUIRE(presets.at("wifi").latency_ms == 2.0);
  REQUIRE(presets.at("4g").bandwidth_bits_per_s == 20e6);
  REQUIRE(presets.at("4g").latency_ms == 50.0);
  REQUIRE(presets.at("3g").bandwidth_bits_per_s == 2e6);
  REQUIRE(presets.at("3g").latency_ms == 100.0);

  LinkSpec g4 = parse_link("4g");
  // 100 KB over 20 Mbit/s: 50 ms latency + 40 ms serialization.
  REQUIRE(g4.delivery_ms(100000) == Catch::Approx(90.0));
  // The worked example: 200 KB at 1 MB/s with 50 ms latency -> 250 ms.
  LinkSpec mb{"", 8e6, 50.0};
  REQUIRE(mb.delivery_ms(200000) == Catch::Approx(250.0));
  REQUIRE(mb.delivery_ms(0) == Catch::Approx(50.0));

  LinkSpec custom = parse_link("2000000:100");
  REQUIRE(custom.bandwidth_bits_per_s == 2e6);
  REQUIRE(custom.latency_ms == 100.0);
  REQUIRE(custom.bytes_per_s() == Catch::Approx(250000.0));

  REQUIRE_THROWS_AS(parse_link("adsl"), Error);
  REQUIRE_THROWS_AS(parse_link("x:y"), Error);
  REQUIRE_THROWS_AS(parse_link("-5:1"), Error);

  auto t0 = std::chrono::steady_clock::now();
  auto t1 = emulated_arrival(custom, t0, 250000);
  REQUIRE(std::chrono::duration<double, std::milli>(t1 - t0).count() ==
          Catch::Approx(1100.0));
}

TEST_CASE("bounded queue preserves order and enforces capacity", "[pipeline]") {
  BoundedQueue<int> q(2);
  std::atomic<int> produced{0};
  std::thread producer([&] {
    for (int i = 0; i < 10; ++i) {
      q.push(i);
      produced.fetch_add(1);
    }
  });
  sleep_ms(40);
  // Capacity 2: the producer cannot run ahead of the consumer.
  REQUIRE(produced.load() <= 2);
  for (int i = 0; i < 10; ++i) {
    auto v = q.pop();
    REQUIRE(v.has_value());
    REQUIRE(*v == i);
  }
  producer.join();
  REQUIRE(produced.load() == 10);

  q.push(99);
  q.close();
  auto leftover = q.pop();
  REQUIRE(leftover.has_value());  // closing drains what is queued
  REQUIRE(*leftover == 99);
  REQUIRE_FALSE(q.pop().has_value());
  REQUIRE_FALSE(q.push(1));
}

TEST_CASE("staged pipeline throughput tracks the slowest stage", "[pipeline]") {
  std::vector<std::function<void(size_t)>> stages = {
      [](size_t) { sleep_ms(6); },
      [](size_t) { sleep_ms(10); },
      [](size_t) { sleep_ms(4); },
  };
  PipelineReport rep = run_staged_pipeline(60, 10, 2, stages);
  REQUIRE(rep.completed == 60);
  REQUIRE(rep.completion_ms.size() == 60);
  // Steady state: one completion per 10 ms bottleneck period.
  REQUIRE(rep.throughput_rps == Catch::Approx(100.0).margin(15.0));
  REQUIRE(rep.stage_busy_ms[1] > rep.stage_busy_ms[0]);
  REQUIRE(rep.stage_busy_ms[1] > rep.stage_busy_ms[2]);
  for (double l : rep.latency_ms) REQUIRE(l >= 19.0);
}

TEST_CASE("client and server complete split inference over TCP", "[runtime]") {
  ReferenceModel m = build_reference_model(0x5eed);
  uint64_t digest = model_digest(m.graph, m.weights);
  InferenceServer server(m.graph, m.weights);
  server.start(0);

  SECTION("handshake rejects a different model") {
    REQUIRE_THROWS_AS(
        ClientConnection("127.0.0.1", server.port(), digest + 1),
        VersionMismatch);
  }

  SECTION("passthrough is bit-identical to local execution at every split") {
    ClientConnection conn("127.0.0.1", server.port(), digest);
    REQUIRE(conn.hello_rtt_ms() >= 0.0);
    Tensor input = reference_input(7, 0);
    Tensor local = forward_logits(m.graph, m.weights, input);
    for (SplitPoint s : candidate_splits(m.graph, true)) {
      RequestTiming t;
      Tensor remote = conn.infer(m.graph, m.weights, input,
                                 {s, kPassthroughBits}, &t);
      REQUIRE(remote.data == local.data);
      REQUIRE(t.total_ms == Catch::Approx(t.device_ms + t.pack_ms +
                                          t.uplink_ms + t.response_ms)
                                .margin(0.05));
      if (s != m.graph.max_split()) {
        REQUIRE(t.bytes_up > 0);
        REQUIRE(t.bytes_down > 0);
        REQUIRE(t.server_ms > 0.0f);
      }
    }
    REQUIRE(server.requests_served() > 0);
  }

  SECTION("quantized crossing still yields valid logits") {
    ClientConnection conn("127.0.0.1", server.port(), digest);
    Tensor input = reference_input(7, 1);
    Tensor remote = conn.infer(m.graph, m.weights, input, {9, 4});
    REQUIRE(remote.shape == Shape{10});
    REQUIRE(remote.all_finite());
  }

  server.stop();
}

TEST_CASE("server failure handling distinguishes bad bodies from garbage",
          "[runtime]") {
  ReferenceModel m = build_reference_model(0x5eed);
  uint64_t digest = model_digest(m.graph, m.weights);
  InferenceServer server(m.graph, m.weights);
  server.start(0);

  SECTION("invalid split id earns an error response, connection survives") {
    Socket sock = connect_tcp("127.0.0.1", server.port());
    WireMessage req;
    req.type = MsgType::infer_request;
    req.request_id = 5;
    req.split_id = m.graph.max_split();  // never shipped: pure client split
    sock.send_frame(req.serialize());
    auto frame = sock.recv_frame();
    REQUIRE(frame.has_value());
    WireMessage resp = WireMessage::parse(*frame);
    REQUIRE(resp.is_error());
    REQUIRE(resp.request_id == 5);

    // Same connection, now a valid request at the input split.
    Tensor input = reference_input(7, 2);
    WireMessage ok;
    ok.type = MsgType::infer_request;
    ok.request_id = 6;
    ok.split_id = 0;
    ok.tensors.push_back(pack(input, {kPassthroughBits, Codec::lz4}, 0));
    sock.send_frame(ok.serialize());
    frame = sock.recv_frame();
    REQUIRE(frame.has_value());
    resp = WireMessage::parse(*frame);
    REQUIRE_FALSE(resp.is_error());
    REQUIRE(resp.request_id == 6);
    Tensor remote = unpack(resp.tensors.at(0));
    REQUIRE(remote.data == forward_logits(m.graph, m.weights, input).data);
  }

  SECTION("missing dependency tensors earn an error response") {
    Socket sock = connect_tcp("127.0.0.1", server.port());
    WireMessage req;
    req.type = MsgType::infer_request;
    req.request_id = 11;
    req.split_id = 0;  // needs the input tensor, ships none
    sock.send_frame(req.serialize());
    auto frame = sock.recv_frame();
    REQUIRE(frame.has_value());
    REQUIRE(WireMessage::parse(*frame).is_error());
  }

  SECTION("well-framed junk with a plausible header keeps the stream") {
    Socket sock = connect_tcp("127.0.0.1", server.port());
    WireMessage req;
    req.type = MsgType::infer_request;
    auto body = req.serialize();
    body[18] = 1;  // tensor_count = 1, but no tensor bytes follow
    sock.send_frame(body);
    auto frame = sock.recv_frame();
    REQUIRE(frame.has_value());
    REQUIRE(WireMessage::parse(*frame).is_error());

    WireMessage hello;
    hello.type = MsgType::hello;
    hello.digest = digest;
    sock.send_frame(hello.serialize());
    frame = sock.recv_frame();
    REQUIRE(frame.has_value());
    REQUIRE(WireMessage::parse(*frame).type == MsgType::hello);
  }

  SECTION("frames from another protocol close the connection") {
    Socket sock = connect_tcp("127.0.0.1", server.port());
    std::vector<uint8_t> junk(16, 'X');
    sock.send_frame(junk);
    REQUIRE_FALSE(sock.recv_frame().has_value());
  }

  SECTION("profile feedback is absorbed silently") {
    ClientConnection conn("127.0.0.1", server.port(), digest);
    conn.send_feedback(12.5);
    // The next round trip must answer the hello, not the feedback.
    REQUIRE(conn.ping() >= 0.0);
  }

  server.stop();
}

TEST_CASE("pipelined and sequential drivers agree with local execution",
          "[runtime]") {
  ReferenceModel m = build_reference_model(0x5eed);
  uint64_t digest = model_digest(m.graph, m.weights);
  std::vector<Tensor> inputs = reference_inputs(21, 4);
  std::vector<int> expected;
  for (size_t i = 0; i < 12; ++i)
    expected.push_back(static_cast<int>(
        top1(forward_logits(m.graph, m.weights, inputs[i % 4]))));

  InferenceServer server(m.graph, m.weights);
  server.start(0);
  ClientConnection conn("127.0.0.1", server.port(), digest,
                        link_presets().at("ethernet"));

  RunReport pip = conn.run_pipelined(m.graph, m.weights, inputs,
                                     {9, kPassthroughBits}, 12, 2);
  REQUIRE(pip.completed == 12);
  REQUIRE(pip.top1_class == expected);
  REQUIRE(pip.throughput_rps > 0.0);
  REQUIRE(pip.bytes_up > 12 * 1000);
  REQUIRE(pip.device_busy_ms > 0.0);
  REQUIRE(pip.server_busy_ms > 0.0);

  RunReport seq = conn.run_sequential(m.graph, m.weights, inputs,
                                      {9, kPassthroughBits}, 12, 2);
  REQUIRE(seq.completed == 12);
  REQUIRE(seq.top1_class == expected);
  REQUIRE(seq.mean_latency_ms > 0.0);

  server.stop();
}

TEST_CASE("uplink emulation holds the sender for the modeled delay",
          "[runtime]") {
  ReferenceModel m = build_reference_model(0x5eed);
  uint64_t digest = model_digest(m.graph, m.weights);
  InferenceServer server(m.graph, m.weights);
  server.start(0);
  LinkSpec g4 = link_presets().at("4g");
  ClientConnection conn("127.0.0.1", server.port(), digest, g4);

  RequestTiming t;
  conn.infer(m.graph, m.weights, reference_input(7, 3),
             {0, kPassthroughBits}, &t);
  double expect = g4.delivery_ms(t.bytes_up);
  REQUIRE(t.uplink_ms == Catch::Approx(expect).margin(3.0));
  // The response direction pays bandwidth only; it still takes real time.
  REQUIRE(t.response_ms >= double(t.server_ms));
  server.stop();
}

TEST_CASE("run_local reports a pure device run", "[runtime]") {
  ReferenceModel m = build_reference_model(0x5eed);
  std::vector<Tensor> inputs = reference_inputs(3, 2);
  RunReport rep = run_local(m.graph, m.weights, inputs, 6, 1);
  REQUIRE(rep.completed == 6);
  REQUIRE(rep.bytes_up == 0);
  REQUIRE(rep.server_busy_ms == 0.0);
  REQUIRE(rep.device_busy_ms > 0.0);
  REQUIRE(rep.top1_class[0] == rep.top1_class[2]);  // inputs repeat mod 2
}

TEST_CASE("sweeps order variants the way the space inclusion demands",
          "[sweep]") {
  fixtures::ToySpec spec;
  spec.t_layer = {0, 30, 30, 0};
  spec.t_server = {0, 5, 5, 0};
  spec.splits = {0, 1, 2, 3};
  spec.bitwidths = {0, 8};
  spec.t_pack = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0};
  spec.d_size = {40000, 10000, 20000, 5000, 8000, 2000, 0, 0};
  spec.acc = {0, 1, 0, 1, 0, 1, 0, 0};
  ProfileDB db = fixtures::make_profile(spec);

  SECTION("bandwidth sweep: richer spaces never lose") {
    std::vector<double> bw = {1e6, 1e7, 1e8, 1e9};
    auto rows = bandwidth_sweep(db, bw, 10.0, all_variants(), {}, {}, {},
                                false);
    REQUIRE(rows.size() == bw.size() * 4);
    double prev_server_only = 1e300;
    for (size_t i = 0; i < rows.size(); i += 4) {
      const auto& full = rows[i];
      REQUIRE(full.variant == Variant::full);
      for (size_t j = 1; j < 4; ++j)
        REQUIRE(full.predicted.latency_ms <=
                rows[i + j].predicted.latency_ms + 1e-9);
      REQUIRE(rows[i + 3].variant == Variant::server_only);
      REQUIRE(rows[i + 3].predicted.latency_ms <= prev_server_only + 1e-9);
      prev_server_only = rows[i + 3].predicted.latency_ms;
    }
  }

  SECTION("deadline sweep: savings never decrease as deadlines loosen") {
    NetSnapshot net{10.0, 1.25e6};
    auto rows = deadline_sweep(db, {25, 29, 50, 65, 100}, net, {}, false);
    REQUIRE(rows.size() == 5);
    REQUIRE(rows[0].best_effort);  // 25 ms is under the fastest config
    REQUIRE(rows[0].savings_pct == Catch::Approx(0.0));
    REQUIRE(rows[1].savings_pct == Catch::Approx(0.0));
    REQUIRE(rows[2].savings_pct == Catch::Approx(50.0));
    REQUIRE(rows[3].savings_pct == Catch::Approx(100.0));
    REQUIRE(rows[4].savings_pct == Catch::Approx(100.0));
    for (size_t i = 1; i < rows.size(); ++i)
      REQUIRE(rows[i].savings_pct >= rows[i - 1].savings_pct - 1e-9);
  }

  SECTION("measure_live on the pure client split never opens a socket") {
    ReferenceModel m = build_reference_model(0x5eed);
    std::vector<Tensor> inputs = reference_inputs(3, 2);
    RunReport rep = measure_live(m.graph, m.weights, inputs, std::nullopt,
                                 {m.graph.max_split(), kPassthroughBits}, 4,
                                 1, true);
    REQUIRE(rep.completed == 4);
    REQUIRE(rep.bytes_up == 0);
  }
}
