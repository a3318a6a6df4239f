#pragma once

// Layer dependency graph for a CNN with branches and residual connections.
//
// Nodes are declared in topological order and node ids equal declaration
// order, so a split point is a single integer s: nodes with id <= s run on
// the client, ids > s on the server. The tensors that cross the cut for a
// given s are exactly the outputs of nodes p <= s consumed by some node
// q > s.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"

namespace onloadrt {

enum class OpKind : uint8_t {
  input,
  conv2d,
  relu,
  add,
  maxpool,
  avgpool,
  dense,
  flatten,
  concat,
  output,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::add: return "add";
    case OpKind::maxpool: return "maxpool";
    case OpKind::avgpool: return "avgpool";
    case OpKind::dense: return "dense";
    case OpKind::flatten: return "flatten";
    case OpKind::concat: return "concat";
    case OpKind::output: return "output";
  }
  return "?";
}

inline OpKind op_from_name(const std::string& s) {
  for (uint8_t k = 0; k <= static_cast<uint8_t>(OpKind::output); ++k)
    if (s == op_name(static_cast<OpKind>(k))) return static_cast<OpKind>(k);
  throw UnknownOperator("unknown operator kind: " + s);
}

// Per-node attributes; which fields matter depends on the kind.
struct OpParams {
  std::vector<uint32_t> input_shape;  // input nodes only
  uint32_t out_channels = 0;          // conv2d
  uint32_t kernel = 0;                // conv2d / maxpool / avgpool
  uint32_t stride = 1;                // conv2d / maxpool / avgpool
  uint32_t padding = 0;               // conv2d
  uint32_t units = 0;                 // dense

  bool operator==(const OpParams&) const = default;
};

struct LayerNode {
  uint32_t id = 0;
  OpKind kind = OpKind::input;
  std::vector<uint32_t> input_ids;  // declared order is preserved (concat!)
  OpParams params;
};

using SplitPoint = uint32_t;

struct DepGraph {
  std::vector<LayerNode> nodes;
  std::vector<std::vector<uint32_t>> consumers;  // derived: who reads node i

  size_t num_nodes() const { return nodes.size(); }

  // Largest split id: s = max_split() keeps everything on the client.
  SplitPoint max_split() const {
    return static_cast<SplitPoint>(nodes.size() - 1);
  }

  uint32_t output_id() const { return max_split(); }
};

// Validates structure and derives consumer lists. Nodes must arrive with
// ids 0..N in declaration order, inputs referencing only earlier ids.
inline DepGraph build_graph(std::vector<LayerNode> nodes) {
  if (nodes.empty()) throw Error("graph: no nodes");
  DepGraph g;
  g.nodes = std::move(nodes);
  g.consumers.assign(g.nodes.size(), {});

  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    if (n.id != i)
      throw Error("graph: node ids must be 0..N in declaration order");
    for (uint32_t p : n.input_ids) {
      if (p >= n.id)
        throw CycleError("graph: node " + std::to_string(n.id) +
                         " references id " + std::to_string(p) +
                         " not declared before it");
      g.consumers[p].push_back(n.id);
    }
    switch (n.kind) {
      case OpKind::input:
        if (n.id != 0 || !n.input_ids.empty())
          throw Error("graph: input must be node 0 with no inputs");
        if (n.params.input_shape.empty())
          throw Error("graph: input node needs a shape");
        break;
      case OpKind::output:
        if (n.id != g.nodes.size() - 1)
          throw Error("graph: output must be the last node");
        if (n.input_ids.size() != 1)
          throw Error("graph: output takes exactly one input");
        break;
      case OpKind::add:
      case OpKind::concat:
        if (n.input_ids.size() < 2)
          throw Error(std::string("graph: ") + op_name(n.kind) +
                      " needs at least two inputs");
        break;
      default:
        if (n.input_ids.size() != 1)
          throw Error(std::string("graph: ") + op_name(n.kind) +
                      " takes exactly one input");
        break;
    }
  }
  if (g.nodes.front().kind != OpKind::input)
    throw Error("graph: first node must be the input");
  if (g.nodes.back().kind != OpKind::output)
    throw Error("graph: last node must be the output");
  for (size_t i = 0; i + 1 < g.nodes.size(); ++i)
    if (g.consumers[i].empty())
      throw Error("graph: node " + std::to_string(i) + " has no consumer");
  return g;
}

// Outputs of client-side nodes that server-side nodes still need, in
// ascending id order. s == max_split() crosses nothing; s == 0 crosses only
// the raw input.
inline std::vector<uint32_t> split_dependencies(const DepGraph& g,
                                                SplitPoint s) {
  if (s > g.max_split())
    throw RangeError("split id " + std::to_string(s) + " exceeds " +
                     std::to_string(g.max_split()));
  std::vector<uint32_t> deps;
  for (uint32_t p = 0; p <= s; ++p) {
    for (uint32_t q : g.consumers[p]) {
      if (q > s) {
        deps.push_back(p);
        break;
      }
    }
  }
  return deps;  // scan order is already ascending
}

// Split points worth profiling. With relu_only set, interior splits are kept
// only when every crossing tensor comes out of a relu: post-activation maps
// are sparse and one-sided, which is where packing pays off. The endpoints
// (pure server, pure client) always stay in the list.
inline std::vector<SplitPoint> candidate_splits(const DepGraph& g,
                                                bool relu_only) {
  std::vector<SplitPoint> out;
  for (SplitPoint s = 0; s <= g.max_split(); ++s) {
    if (relu_only && s != 0 && s != g.max_split()) {
      bool ok = true;
      for (uint32_t p : split_dependencies(g, s))
        if (g.nodes[p].kind != OpKind::relu) {
          ok = false;
          break;
        }
      if (!ok) continue;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace onloadrt
