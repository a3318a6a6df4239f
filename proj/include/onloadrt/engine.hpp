#pragma once

// Reference execution engine: scalar, single-threaded, batch size one.
//
// Determinism is the contract here, not speed. Every operator accumulates in
// a fixed order (ascending input index), so the same plan over the same
// tensors produces bit-identical floats on every run. That property is what
// lets a split execution be checked against an unsplit one exactly.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"
#include "model_io.hpp"
#include "tensor.hpp"

namespace onloadrt {

using Shape = std::vector<uint32_t>;

namespace detail {

inline Shape conv_like_shape(const Shape& in, uint32_t out_c, uint32_t k,
                             uint32_t stride, uint32_t pad, const char* what) {
  if (in.size() != 3)
    throw ShapeError(std::string(what) + ": expects CHW input, got " +
                     shape_to_string(in));
  if (k == 0 || stride == 0)
    throw ShapeError(std::string(what) + ": kernel and stride must be >= 1");
  uint32_t h = in[1] + 2 * pad, w = in[2] + 2 * pad;
  if (h < k || w < k)
    throw ShapeError(std::string(what) + ": kernel larger than padded input");
  return {out_c, (h - k) / stride + 1, (w - k) / stride + 1};
}

}  // namespace detail

// Static shapes for every node; throws ShapeError on inconsistent wiring.
inline std::vector<Shape> infer_shapes(const DepGraph& g) {
  std::vector<Shape> shapes(g.num_nodes());
  for (const LayerNode& n : g.nodes) {
    auto in = [&](size_t i) -> const Shape& { return shapes[n.input_ids[i]]; };
    switch (n.kind) {
      case OpKind::input:
        shapes[n.id] = n.params.input_shape;
        break;
      case OpKind::conv2d:
        shapes[n.id] = detail::conv_like_shape(in(0), n.params.out_channels,
                                               n.params.kernel, n.params.stride,
                                               n.params.padding, "conv2d");
        break;
      case OpKind::relu:
      case OpKind::output:
        shapes[n.id] = in(0);
        break;
      case OpKind::add:
        for (size_t i = 1; i < n.input_ids.size(); ++i)
          if (in(i) != in(0))
            throw ShapeError("add: mismatched input shapes at node " +
                             std::to_string(n.id));
        shapes[n.id] = in(0);
        break;
      case OpKind::maxpool:
      case OpKind::avgpool:
        shapes[n.id] = detail::conv_like_shape(in(0), in(0).at(0),
                                               n.params.kernel, n.params.stride,
                                               0, op_name(n.kind));
        break;
      case OpKind::dense: {
        if (in(0).size() != 1)
          throw ShapeError("dense: expects rank-1 input, got " +
                           shape_to_string(in(0)));
        shapes[n.id] = {n.params.units};
        break;
      }
      case OpKind::flatten: {
        uint32_t n_elems = 1;
        for (uint32_t d : in(0)) n_elems *= d;
        shapes[n.id] = {n_elems};
        break;
      }
      case OpKind::concat: {
        const Shape& first = in(0);
        if (first.size() != 3)
          throw ShapeError("concat: expects CHW inputs");
        uint32_t c = first[0];
        for (size_t i = 1; i < n.input_ids.size(); ++i) {
          if (in(i).size() != 3 || in(i)[1] != first[1] || in(i)[2] != first[2])
            throw ShapeError("concat: spatial dims differ at node " +
                             std::to_string(n.id));
          c += in(i)[0];
        }
        shapes[n.id] = {c, first[1], first[2]};
        break;
      }
    }
  }
  return shapes;
}

// A contiguous id range to execute, tensors injected for ids outside the
// range, and the node outputs the caller wants back.
struct ExecPlan {
  uint32_t first = 0;
  uint32_t last = 0;  // inclusive
  std::map<uint32_t, Tensor> inject;
  std::vector<uint32_t> emit;
};

struct ExecResult {
  std::map<uint32_t, Tensor> outputs;   // one entry per requested emit id
  std::vector<uint32_t> executed;       // ids actually computed, ascending
};

namespace detail {

inline void run_conv2d(const LayerNode& n, const Tensor& in, const Shape& os,
                       const std::vector<float>& wt, Tensor& out) {
  const uint32_t ic = in.shape[0], ih = in.shape[1], iw = in.shape[2];
  const uint32_t oc = os[0], oh = os[1], ow = os[2];
  const uint32_t k = n.params.kernel, stride = n.params.stride,
                 pad = n.params.padding;
  if (wt.size() != size_t(oc) * ic * k * k + oc)
    throw ModelFormatError("conv2d: weight count mismatch at node " +
                           std::to_string(n.id));
  const float* kernels = wt.data();
  const float* bias = wt.data() + size_t(oc) * ic * k * k;
  for (uint32_t o = 0; o < oc; ++o) {
    for (uint32_t oy = 0; oy < oh; ++oy) {
      for (uint32_t ox = 0; ox < ow; ++ox) {
        float acc = bias[o];
        for (uint32_t c = 0; c < ic; ++c) {
          const float* kr = kernels + ((size_t(o) * ic + c) * k) * k;
          for (uint32_t ky = 0; ky < k; ++ky) {
            int64_t iy = int64_t(oy) * stride + ky - pad;
            if (iy < 0 || iy >= ih) continue;
            for (uint32_t kx = 0; kx < k; ++kx) {
              int64_t ix = int64_t(ox) * stride + kx - pad;
              if (ix < 0 || ix >= iw) continue;
              acc += in.data[(size_t(c) * ih + iy) * iw + ix] *
                     kr[ky * k + kx];
            }
          }
        }
        out.data[(size_t(o) * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

inline void run_pool(const LayerNode& n, const Tensor& in, const Shape& os,
                     bool is_max, Tensor& out) {
  const uint32_t c_n = in.shape[0], ih = in.shape[1], iw = in.shape[2];
  const uint32_t oh = os[1], ow = os[2];
  const uint32_t k = n.params.kernel, stride = n.params.stride;
  for (uint32_t c = 0; c < c_n; ++c) {
    for (uint32_t oy = 0; oy < oh; ++oy) {
      for (uint32_t ox = 0; ox < ow; ++ox) {
        float acc = is_max ? -INFINITY : 0.0f;
        for (uint32_t ky = 0; ky < k; ++ky) {
          for (uint32_t kx = 0; kx < k; ++kx) {
            float v = in.data[(size_t(c) * ih + oy * stride + ky) * iw +
                              ox * stride + kx];
            acc = is_max ? std::max(acc, v) : acc + v;
          }
        }
        out.data[(size_t(c) * oh + oy) * ow + ox] =
            is_max ? acc : acc / float(k * k);
      }
    }
  }
}

inline void run_dense(const LayerNode& n, const Tensor& in, const Shape& os,
                      const std::vector<float>& wt, Tensor& out) {
  const uint32_t d = in.shape[0], u = os[0];
  if (wt.size() != size_t(u) * d + u)
    throw ModelFormatError("dense: weight count mismatch at node " +
                           std::to_string(n.id));
  const float* m = wt.data();
  const float* bias = wt.data() + size_t(u) * d;
  for (uint32_t r = 0; r < u; ++r) {
    float acc = bias[r];
    const float* row = m + size_t(r) * d;
    for (uint32_t i = 0; i < d; ++i) acc += row[i] * in.data[i];
    out.data[r] = acc;
  }
}

}  // namespace detail

// Executes nodes [plan.first, plan.last] in id order. Tensors for ids
// outside the range must be provided through plan.inject (the model input
// counts as node 0's operand and comes through `input`). Optionally records
// per-node wall time into *node_ms (indexed by id, milliseconds).
inline ExecResult execute(const DepGraph& g, const Weights& w,
                          const ExecPlan& plan, const Tensor* input = nullptr,
                          std::vector<double>* node_ms = nullptr) {
  if (plan.last >= g.num_nodes() || plan.first > plan.last)
    throw RangeError("execute: bad node range");
  std::vector<Shape> shapes = infer_shapes(g);

  std::map<uint32_t, Tensor> values;
  for (const auto& [id, t] : plan.inject) {
    if (id >= plan.first && id <= plan.last) continue;  // will be computed
    if (id >= g.num_nodes())
      throw RangeError("execute: injected id out of range");
    if (t.shape != shapes[id])
      throw ShapeError("execute: injected tensor for node " +
                       std::to_string(id) + " has shape " +
                       shape_to_string(t.shape) + ", expected " +
                       shape_to_string(shapes[id]));
    values.emplace(id, t);
  }

  ExecResult result;
  if (node_ms) node_ms->assign(g.num_nodes(), 0.0);

  auto fetch = [&](uint32_t id) -> const Tensor& {
    auto it = values.find(id);
    if (it == values.end())
      throw MissingDependency("execute: node " + std::to_string(id) +
                              " is neither computed in range nor injected");
    return it->second;
  };

  for (uint32_t id = plan.first; id <= plan.last; ++id) {
    const LayerNode& n = g.nodes[id];
    Tensor out = Tensor::zeros(shapes[id]);
    auto t0 = std::chrono::steady_clock::now();
    switch (n.kind) {
      case OpKind::input: {
        if (!input)
          throw MissingDependency("execute: range covers the input node but "
                                  "no input tensor was supplied");
        if (input->shape != n.params.input_shape)
          throw ShapeError("execute: input shape " +
                           shape_to_string(input->shape) + ", model wants " +
                           shape_to_string(n.params.input_shape));
        out = *input;
        break;
      }
      case OpKind::conv2d:
        detail::run_conv2d(n, fetch(n.input_ids[0]), shapes[id], w.at(id), out);
        break;
      case OpKind::relu: {
        const Tensor& in = fetch(n.input_ids[0]);
        for (size_t i = 0; i < in.data.size(); ++i)
          out.data[i] = in.data[i] > 0.0f ? in.data[i] : 0.0f;
        break;
      }
      case OpKind::add: {
        out = fetch(n.input_ids[0]);
        for (size_t j = 1; j < n.input_ids.size(); ++j) {
          const Tensor& in = fetch(n.input_ids[j]);
          for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += in.data[i];
        }
        break;
      }
      case OpKind::maxpool:
        detail::run_pool(n, fetch(n.input_ids[0]), shapes[id], true, out);
        break;
      case OpKind::avgpool:
        detail::run_pool(n, fetch(n.input_ids[0]), shapes[id], false, out);
        break;
      case OpKind::dense:
        detail::run_dense(n, fetch(n.input_ids[0]), shapes[id], w.at(id), out);
        break;
      case OpKind::flatten: {
        const Tensor& in = fetch(n.input_ids[0]);
        out.data = in.data;
        break;
      }
      case OpKind::concat: {
        size_t off = 0;
        for (uint32_t src : n.input_ids) {
          const Tensor& in = fetch(src);
          std::copy(in.data.begin(), in.data.end(), out.data.begin() + off);
          off += in.data.size();
        }
        break;
      }
      case OpKind::output:
        out = fetch(n.input_ids[0]);
        break;
    }
    if (node_ms) {
      auto t1 = std::chrono::steady_clock::now();
      (*node_ms)[id] =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    values.emplace(id, std::move(out));
    result.executed.push_back(id);
  }

  for (uint32_t id : plan.emit) {
    auto it = values.find(id);
    if (it == values.end())
      throw MissingDependency("execute: emit id " + std::to_string(id) +
                              " was not computed or injected");
    result.outputs.emplace(id, it->second);
  }
  return result;
}

// Whole-network forward pass; returns the output node's tensor (logits).
inline Tensor forward_logits(const DepGraph& g, const Weights& w,
                             const Tensor& input,
                             std::vector<double>* node_ms = nullptr) {
  ExecPlan plan{0, g.max_split(), {}, {g.output_id()}};
  ExecResult r = execute(g, w, plan, &input, node_ms);
  return std::move(r.outputs.at(g.output_id()));
}

inline size_t top1(const Tensor& logits) {
  size_t best = 0;
  for (size_t i = 1; i < logits.data.size(); ++i)
    if (logits.data[i] > logits.data[best]) best = i;
  return best;
}

}  // namespace onloadrt
