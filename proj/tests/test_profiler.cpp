#include "onloadrt/profiler.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "onloadrt/reference_model.hpp"

using namespace onloadrt;

TEST_CASE("calibrate fills coherent tables for the reference model", "[profiler]") {
  ReferenceModel m = build_reference_model(0xcafe);
  CalibrationOptions opts;
  opts.seed = 42;
  opts.count = 4;
  ProfileDB db = calibrate(m.graph, m.weights, opts);

  REQUIRE(db.splits == candidate_splits(m.graph, true));
  REQUIRE(db.t_layer_ms().size() == m.graph.num_nodes());
  REQUIRE(db.t_server_ms.size() == m.graph.num_nodes());
  // Convolutions dominate; they must register measurable time.
  REQUIRE(db.t_layer_ms()[3] > 0.1);
  REQUIRE(db.t_server_ms[3] > 0.1);

  // Prefix/suffix bookkeeping against direct summation.
  double manual = 0;
  for (size_t i = 0; i <= 9; ++i) manual += db.t_layer_ms()[i];
  REQUIRE(db.client_prefix_ms(9) == Catch::Approx(manual));
  manual = 0;
  for (size_t i = 10; i < m.graph.num_nodes(); ++i) manual += db.t_server_ms[i];
  REQUIRE(db.server_suffix_ms(9) == Catch::Approx(manual));
  REQUIRE(db.server_suffix_ms(m.graph.max_split()) == 0.0);

  size_t pass_col = db.bitwidth_index(kPassthroughBits);
  size_t last_row = db.split_index(m.graph.max_split());
  for (size_t si = 0; si < db.splits.size(); ++si) {
    // Passthrough is bit-exact end to end: agreement loss must be zero.
    REQUIRE(db.acc_delta_pp.at(si, pass_col) == 0.0);
    for (size_t bi = 0; bi < db.bitwidths.size(); ++bi) {
      REQUIRE(db.d_size_bytes.at(si, bi) >= 0.0);
      REQUIRE(db.acc_delta_pp.at(si, bi) >= 0.0);
      REQUIRE(db.acc_delta_pp.at(si, bi) <= 100.0);
      if (si == last_row) {
        REQUIRE(db.d_size_bytes.at(si, bi) == 0.0);
        REQUIRE(db.t_pack_ms.at(si, bi) == 0.0);
        REQUIRE(db.acc_delta_pp.at(si, bi) == 0.0);
      }
    }
    if (si != last_row) {
      // Narrower codes cannot make the crossing bigger.
      size_t b8 = db.bitwidth_index(8), b2 = db.bitwidth_index(2);
      REQUIRE(db.d_size_bytes.at(si, b2) <= db.d_size_bytes.at(si, b8));
      REQUIRE(db.d_size_bytes.at(si, b8) <=
              db.d_size_bytes.at(si, pass_col) + 64.0);
    }
  }

  REQUIRE_THROWS_AS(db.split_index(5), MissingProfileEntry);
  REQUIRE_THROWS_AS(db.bitwidth_index(7), MissingProfileEntry);
}

TEST_CASE("profile persistence is byte-stable", "[profiler]") {
  ReferenceModel m = build_reference_model(0xbeef);
  CalibrationOptions opts;
  opts.count = 2;
  ProfileDB db = calibrate(m.graph, m.weights, opts);

  auto blob = serialize_profile(db);
  ProfileDB back = parse_profile(blob);
  REQUIRE(serialize_profile(back) == blob);  // exact fixed point
  REQUIRE(back.model_digest == db.model_digest);
  REQUIRE(back.splits == db.splits);
  REQUIRE(back.bitwidths == db.bitwidths);
  REQUIRE(back.t_layer_ms() == db.t_layer_ms());
  REQUIRE(back.d_size_bytes.cells == db.d_size_bytes.cells);

  std::string path = "/tmp/onloadrt_test_profile.bin";
  save_profile(db, path);
  ProfileDB loaded = load_profile(path);
  REQUIRE(serialize_profile(loaded) == blob);
  std::remove(path.c_str());

  SECTION("corruption detected") {
    blob[0] ^= 1;
    REQUIRE_THROWS_AS(parse_profile(blob), ModelFormatError);
  }
  SECTION("truncation detected") {
    blob.resize(blob.size() / 2);
    REQUIRE_THROWS_AS(parse_profile(blob), ModelFormatError);
  }
}

TEST_CASE("network estimator follows the dual-EMA contract", "[profiler]") {
  NetworkEstimate net;

  SECTION("first observation seeds both averages") {
    observe_transfer(net, "wifi", 1e6, 1000.0, 0.0);
    REQUIRE(net.realtime.bandwidth_Bps == Catch::Approx(1e6));
    REQUIRE(net.historical["wifi"].bandwidth_Bps == Catch::Approx(1e6));
  }

  SECTION("alpha 0.5 realtime vs alpha 0.05 historical") {
    observe_transfer(net, "wifi", 1e6, 1000.0, 0.0);
    observe_transfer(net, "wifi", 2e6, 1000.0, 1.0);
    REQUIRE(net.realtime.bandwidth_Bps == Catch::Approx(1.5e6));
    REQUIRE(net.historical["wifi"].bandwidth_Bps ==
            Catch::Approx(0.05 * 2e6 + 0.95 * 1e6));
  }

  SECTION("latency probes and serialization-time subtraction") {
    observe_transfer(net, "wifi", 0.0, 50.0, 0.0);  // latency probe
    REQUIRE(net.realtime.latency_ms == Catch::Approx(50.0));
    // 1 MB taking 1050 ms total: 1000 ms of serialization after the 50 ms
    // latency share -> 1 MB/s.
    observe_transfer(net, "wifi", 1e6, 1050.0, 1.0);
    REQUIRE(net.realtime.bandwidth_Bps == Catch::Approx(1e6));
    // Transfer prediction: latency + size/bandwidth.
    REQUIRE(estimate_transfer_ms(net, 200000.0, 2.0) == Catch::Approx(250.0));
  }

  SECTION("stale realtime falls back to per-type history") {
    observe_transfer(net, "wifi", 0.0, 10.0, 0.0);
    observe_transfer(net, "wifi", 1e6, 1010.0, 0.0);
    // 400 s later: older than the 300 s freshness window.
    LinkEstimate e = best_estimate(net, 400000.0);
    REQUIRE(e.bandwidth_Bps == Catch::Approx(1e6));   // from history
    REQUIRE(estimate_transfer_ms(net, 1e6, 400000.0) ==
            Catch::Approx(10.0 + 1000.0));
    // Within the window the realtime average serves.
    REQUIRE_NOTHROW(best_estimate(net, 200000.0));
  }

  SECTION("link-type switch voids realtime but keeps per-type history") {
    observe_transfer(net, "wifi", 1e6, 1000.0, 0.0);
    observe_transfer(net, "4g", 2.5e5, 1000.0, 1.0);
    REQUIRE(net.realtime.bandwidth_Bps == Catch::Approx(2.5e5));  // reseeded
    REQUIRE(net.historical["wifi"].bandwidth_Bps == Catch::Approx(1e6));
    REQUIRE(net.historical["4g"].bandwidth_Bps == Catch::Approx(2.5e5));
    // Back on wifi with no fresh sample: wifi history answers.
    observe_transfer(net, "wifi", 0.0, 5.0, 2.0);  // latency only
    LinkEstimate e = best_estimate(net, 3.0);
    REQUIRE(e.bandwidth_Bps == Catch::Approx(1e6));
  }

  SECTION("no estimate anywhere throws") {
    REQUIRE_THROWS_AS(best_estimate(net, 0.0), NoEstimate);
    NetworkEstimate n2;
    observe_transfer(n2, "wifi", 0.0, 5.0, 0.0);  // latency but no bandwidth
    REQUIRE_THROWS_AS(estimate_transfer_ms(n2, 100.0, 1.0), NoEstimate);
  }
}

TEST_CASE("load scaling factor", "[profiler]") {
  REQUIRE(scaling_factor(25.0, 10.0) == Catch::Approx(2.5));
  // Predicting another split under the same load: just scale its offline time.
  REQUIRE(scaling_factor(25.0, 10.0) * 4.0 == Catch::Approx(10.0));
  REQUIRE_THROWS_AS(scaling_factor(5.0, 0.0), ZeroOfflineTime);
  REQUIRE_THROWS_AS(scaling_factor(5.0, -1.0), ZeroOfflineTime);
}
