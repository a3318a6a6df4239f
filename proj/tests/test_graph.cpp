#include "onloadrt/graph.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <vector>

#include "onloadrt/reference_model.hpp"

using namespace onloadrt;

namespace {

// input -> conv -> relu -> add(relu, input) -> output
DepGraph residual_graph() {
  std::vector<LayerNode> n;
  LayerNode input{0, OpKind::input, {}, {}};
  input.params.input_shape = {4, 8, 8};
  n.push_back(input);
  LayerNode conv{1, OpKind::conv2d, {0}, {}};
  conv.params.out_channels = 4;
  conv.params.kernel = 3;
  conv.params.stride = 1;
  conv.params.padding = 1;
  n.push_back(conv);
  n.push_back({2, OpKind::relu, {1}, {}});
  n.push_back({3, OpKind::add, {2, 0}, {}});
  n.push_back({4, OpKind::output, {3}, {}});
  return build_graph(std::move(n));
}

// input -> conv -> relu -> dense-ish chain (flatten+dense) -> output
DepGraph chain_graph() {
  std::vector<LayerNode> n;
  LayerNode input{0, OpKind::input, {}, {}};
  input.params.input_shape = {2, 4, 4};
  n.push_back(input);
  LayerNode conv{1, OpKind::conv2d, {0}, {}};
  conv.params.out_channels = 2;
  conv.params.kernel = 3;
  conv.params.stride = 1;
  conv.params.padding = 1;
  n.push_back(conv);
  n.push_back({2, OpKind::relu, {1}, {}});
  n.push_back({3, OpKind::flatten, {2}, {}});
  LayerNode fc{4, OpKind::dense, {3}, {}};
  fc.params.units = 3;
  n.push_back(fc);
  n.push_back({5, OpKind::output, {4}, {}});
  return build_graph(std::move(n));
}

}  // namespace

TEST_CASE("residual wiring keeps declared input order", "[graph]") {
  DepGraph g = residual_graph();
  REQUIRE(g.nodes[3].input_ids == std::vector<uint32_t>{2, 0});
  REQUIRE(g.consumers[0] == std::vector<uint32_t>{1, 3});
  REQUIRE(g.consumers[2] == std::vector<uint32_t>{3});
}

TEST_CASE("split dependencies cover exactly the crossing tensors", "[graph]") {
  DepGraph g = residual_graph();
  // s=2: relu output feeds add (3 > 2), and the raw input also feeds add.
  REQUIRE(split_dependencies(g, 2) == std::vector<uint32_t>{0, 2});
  // s=0: pure offload, the input tensor crosses.
  REQUIRE(split_dependencies(g, 0) == std::vector<uint32_t>{0});
  // s=N: nothing crosses.
  REQUIRE(split_dependencies(g, g.max_split()).empty());
  // s=1: conv output feeds relu, input still needed by add.
  REQUIRE(split_dependencies(g, 1) == std::vector<uint32_t>{0, 1});
  REQUIRE_THROWS_AS(split_dependencies(g, g.max_split() + 1), RangeError);
}

TEST_CASE("relu-only candidate filter keeps endpoints", "[graph]") {
  DepGraph chain = chain_graph();
  // Interior split survives only after the relu (id 2); flatten/dense/conv
  // cuts are filtered. Endpoints always stay.
  REQUIRE(candidate_splits(chain, true) ==
          std::vector<SplitPoint>{0, 2, chain.max_split()});
  REQUIRE(candidate_splits(chain, false).size() == chain.num_nodes());

  DepGraph res = residual_graph();
  // Every interior cut of the residual block leaks a non-relu tensor (the
  // skip connection), so only the endpoints survive.
  REQUIRE(candidate_splits(res, true) ==
          std::vector<SplitPoint>{0, res.max_split()});
}

TEST_CASE("reference model exposes relu-only cuts at each section", "[graph]") {
  DepGraph g = reference_graph();
  auto cand = candidate_splits(g, true);
  REQUIRE(cand == std::vector<SplitPoint>{0, 2, 4, 9, 13, 17, 19});
  // Residual section: cutting between the two body convs leaks the add input.
  auto deps4 = split_dependencies(g, 4);
  REQUIRE(deps4 == std::vector<uint32_t>{2, 4});
  for (uint32_t d : deps4) REQUIRE(g.nodes[d].kind == OpKind::relu);
}

TEST_CASE("graph validation rejects malformed node lists", "[graph]") {
  SECTION("forward reference is an order violation") {
    std::vector<LayerNode> n;
    LayerNode input{0, OpKind::input, {}, {}};
    input.params.input_shape = {1, 2, 2};
    n.push_back(input);
    n.push_back({1, OpKind::relu, {2}, {}});  // references later node
    n.push_back({2, OpKind::output, {1}, {}});
    REQUIRE_THROWS_AS(build_graph(std::move(n)), CycleError);
  }
  SECTION("self reference") {
    std::vector<LayerNode> n;
    LayerNode input{0, OpKind::input, {}, {}};
    input.params.input_shape = {1, 2, 2};
    n.push_back(input);
    n.push_back({1, OpKind::relu, {1}, {}});
    n.push_back({2, OpKind::output, {1}, {}});
    REQUIRE_THROWS_AS(build_graph(std::move(n)), CycleError);
  }
  SECTION("non-sequential ids") {
    std::vector<LayerNode> n;
    LayerNode input{0, OpKind::input, {}, {}};
    input.params.input_shape = {1, 2, 2};
    n.push_back(input);
    n.push_back({2, OpKind::output, {0}, {}});
    REQUIRE_THROWS_AS(build_graph(std::move(n)), Error);
  }
  SECTION("dangling interior node") {
    std::vector<LayerNode> n;
    LayerNode input{0, OpKind::input, {}, {}};
    input.params.input_shape = {1, 2, 2};
    n.push_back(input);
    n.push_back({1, OpKind::relu, {0}, {}});   // nobody consumes this
    n.push_back({2, OpKind::output, {0}, {}});
    REQUIRE_THROWS_AS(build_graph(std::move(n)), Error);
  }
}

TEST_CASE("operator names round-trip", "[graph]") {
  for (uint8_t k = 0; k <= uint8_t(OpKind::output); ++k)
    REQUIRE(op_from_name(op_name(OpKind(k))) == OpKind(k));
  REQUIRE_THROWS_AS(op_from_name("softmax"), UnknownOperator);
}
