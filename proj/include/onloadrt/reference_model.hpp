#pragma once

// Seeded reference network: a small branching CNN (two residual/parallel
// sections, pooling, dense head) that exercises every operator and every
// interesting split topology while staying fast enough to execute thousands
// of times in tests. Weights are He-initialized with a slight negative
// convolution bias so post-relu feature maps come out mostly zero, the way
// trained CNN activations do.
//
// CLI commands accept the pseudo-path "ref:<seed>" anywhere a model file is
// expected, which resolves to this network.

#include <cstdint>
#include <string>
#include <vector>

#include "engine.hpp"
#include "graph.hpp"
#include "model_io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace onloadrt {

struct ReferenceModel {
  DepGraph graph;
  Weights weights;
};

inline DepGraph reference_graph() {
  std::vector<LayerNode> n;
  auto conv = [](uint32_t id, uint32_t in, uint32_t oc, uint32_t k,
                 uint32_t stride, uint32_t pad) {
    LayerNode node{id, OpKind::conv2d, {in}, {}};
    node.params.out_channels = oc;
    node.params.kernel = k;
    node.params.stride = stride;
    node.params.padding = pad;
    return node;
  };
  auto pool = [](uint32_t id, OpKind kind, uint32_t in, uint32_t k,
                 uint32_t stride) {
    LayerNode node{id, kind, {in}, {}};
    node.params.kernel = k;
    node.params.stride = stride;
    return node;
  };

  LayerNode input{0, OpKind::input, {}, {}};
  input.params.input_shape = {3, 32, 32};
  n.push_back(input);
  n.push_back(conv(1, 0, 12, 3, 1, 1));       // stem
  n.push_back({2, OpKind::relu, {1}, {}});
  n.push_back(conv(3, 2, 12, 3, 1, 1));       // residual body
  n.push_back({4, OpKind::relu, {3}, {}});
  n.push_back({5, OpKind::add, {2, 4}, {}});  // skip connection
  n.push_back(conv(6, 5, 8, 3, 1, 1));        // parallel branch a
  n.push_back({7, OpKind::relu, {6}, {}});
  n.push_back(conv(8, 5, 8, 3, 1, 1));        // parallel branch b
  n.push_back({9, OpKind::relu, {8}, {}});
  n.push_back({10, OpKind::concat, {7, 9}, {}});
  n.push_back(pool(11, OpKind::maxpool, 10, 2, 2));
  n.push_back(conv(12, 11, 16, 3, 1, 1));
  n.push_back({13, OpKind::relu, {12}, {}});
  n.push_back(pool(14, OpKind::avgpool, 13, 2, 2));
  n.push_back({15, OpKind::flatten, {14}, {}});
  LayerNode fc1{16, OpKind::dense, {15}, {}};
  fc1.params.units = 64;
  n.push_back(fc1);
  n.push_back({17, OpKind::relu, {16}, {}});
  LayerNode fc2{18, OpKind::dense, {17}, {}};
  fc2.params.units = 10;
  n.push_back(fc2);
  n.push_back({19, OpKind::output, {18}, {}});
  return build_graph(std::move(n));
}

inline ReferenceModel build_reference_model(uint64_t seed) {
  ReferenceModel m;
  m.graph = reference_graph();
  std::vector<Shape> shapes = infer_shapes(m.graph);
  Rng rng(seed);

  for (const LayerNode& n : m.graph.nodes) {
    if (n.kind == OpKind::conv2d) {
      uint32_t ic = shapes[n.input_ids[0]][0];
      uint32_t oc = n.params.out_channels, k = n.params.kernel;
      size_t fan_in = size_t(ic) * k * k;
      double std = std::sqrt(2.0 / double(fan_in));
      std::vector<float> w(size_t(oc) * fan_in + oc);
      for (size_t i = 0; i < size_t(oc) * fan_in; ++i)
        w[i] = float(rng.normal() * std);
      // Negative bias shift: keeps post-relu maps ~60% zero.
      for (size_t i = 0; i < oc; ++i)
        w[size_t(oc) * fan_in + i] = float(-0.25 + 0.05 * rng.normal());
      m.weights.by_node[n.id] = std::move(w);
    } else if (n.kind == OpKind::dense) {
      uint32_t d = shapes[n.input_ids[0]][0], u = n.params.units;
      double std = std::sqrt(2.0 / double(d));
      std::vector<float> w(size_t(u) * d + u);
      for (size_t i = 0; i < size_t(u) * d; ++i)
        w[i] = float(rng.normal() * std);
      bool is_head = n.id == m.graph.num_nodes() - 2;
      for (size_t i = 0; i < u; ++i)
        w[size_t(u) * d + i] =
            float(is_head ? 0.02 * rng.normal() : -0.1 + 0.05 * rng.normal());
      m.weights.by_node[n.id] = std::move(w);
    }
  }
  return m;
}

// The i-th calibration/evaluation input for a seed: iid standard normal.
inline Tensor reference_input(uint64_t seed, size_t index) {
  Rng rng(seed ^ (0xd1b54a32d192ed03ull * (index + 1)));
  Tensor t = Tensor::zeros({3, 32, 32});
  for (auto& v : t.data) v = float(rng.normal());
  return t;
}

inline std::vector<Tensor> reference_inputs(uint64_t seed, size_t count) {
  std::vector<Tensor> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) out.push_back(reference_input(seed, i));
  return out;
}

}  // namespace onloadrt
