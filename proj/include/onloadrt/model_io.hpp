#pragma once

// Model, weight, and tensor file formats.
//
// Models are plain text so they diff well and can be written by hand:
//
//   ONLOADRT-MODEL v1
//   node 0 input shape=3x32x32
//   node 1 conv2d inputs=0 out_channels=12 kernel=3 stride=1 padding=1
//   node 2 relu inputs=1
//   ...
//
// Weights live in a sibling binary blob: little-endian float32 runs
// concatenated per node, with an index footer of (node id, float offset,
// float count) entries so single layers can be located without parsing the
// whole file. Tensors use a small binary container for CLI input/output.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"
#include "tensor.hpp"
#include "wire_io.hpp"

namespace onloadrt {

constexpr const char* kModelHeader = "ONLOADRT-MODEL v1";

struct Weights {
  std::map<uint32_t, std::vector<float>> by_node;

  const std::vector<float>& at(uint32_t id) const {
    auto it = by_node.find(id);
    if (it == by_node.end())
      throw ModelFormatError("weights: no entry for node " + std::to_string(id));
    return it->second;
  }

  bool has(uint32_t id) const { return by_node.count(id) != 0; }
};

// ---- model text ---------------------------------------------------------

namespace detail {

inline std::vector<uint32_t> parse_uint_list(const std::string& s, char sep,
                                             const std::string& what) {
  std::vector<uint32_t> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    if (item.empty()) throw ModelFormatError("empty element in " + what);
    size_t used = 0;
    unsigned long v = std::stoul(item, &used);
    if (used != item.size() || v > 0xFFFFFFFFul)
      throw ModelFormatError("bad integer '" + item + "' in " + what);
    out.push_back(static_cast<uint32_t>(v));
  }
  if (out.empty()) throw ModelFormatError("empty list in " + what);
  return out;
}

}  // namespace detail

inline DepGraph parse_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kModelHeader)
    throw ModelFormatError("model: missing or unsupported header line");

  std::vector<LayerNode> nodes;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || tok[0] == '#') continue;  // blank or comment
    if (tok != "node")
      throw ModelFormatError("model line " + std::to_string(lineno) +
                             ": expected 'node'");
    LayerNode n;
    std::string kind;
    if (!(ls >> n.id >> kind))
      throw ModelFormatError("model line " + std::to_string(lineno) +
                             ": expected '<id> <kind>'");
    n.kind = op_from_name(kind);
    while (ls >> tok) {
      size_t eq = tok.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 >= tok.size())
        throw ModelFormatError("model line " + std::to_string(lineno) +
                               ": expected key=value, got '" + tok + "'");
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "inputs")
        n.input_ids = detail::parse_uint_list(val, ',', "inputs");
      else if (key == "shape")
        n.params.input_shape = detail::parse_uint_list(val, 'x', "shape");
      else if (key == "out_channels")
        n.params.out_channels = detail::parse_uint_list(val, ',', key)[0];
      else if (key == "kernel")
        n.params.kernel = detail::parse_uint_list(val, ',', key)[0];
      else if (key == "stride")
        n.params.stride = detail::parse_uint_list(val, ',', key)[0];
      else if (key == "padding")
        n.params.padding = detail::parse_uint_list(val, ',', key)[0];
      else if (key == "units")
        n.params.units = detail::parse_uint_list(val, ',', key)[0];
      else
        throw ModelFormatError("model line " + std::to_string(lineno) +
                               ": unknown attribute '" + key + "'");
    }
    nodes.push_back(std::move(n));
  }
  return build_graph(std::move(nodes));
}

inline DepGraph parse_model(const std::string& text) {
  std::istringstream in(text);
  return parse_model(in);
}

inline std::string serialize_model(const DepGraph& g) {
  std::ostringstream out;
  out << kModelHeader << '\n';
  for (const LayerNode& n : g.nodes) {
    out << "node " << n.id << ' ' << op_name(n.kind);
    if (!n.input_ids.empty()) {
      out << " inputs=";
      for (size_t i = 0; i < n.input_ids.size(); ++i)
        out << (i ? "," : "") << n.input_ids[i];
    }
    switch (n.kind) {
      case OpKind::input:
        out << " shape=" << shape_to_string(n.params.input_shape);
        break;
      case OpKind::conv2d:
        out << " out_channels=" << n.params.out_channels
            << " kernel=" << n.params.kernel << " stride=" << n.params.stride
            << " padding=" << n.params.padding;
        break;
      case OpKind::maxpool:
      case OpKind::avgpool:
        out << " kernel=" << n.params.kernel << " stride=" << n.params.stride;
        break;
      case OpKind::dense:
        out << " units=" << n.params.units;
        break;
      default:
        break;
    }
    out << '\n';
  }
  return out.str();
}

inline DepGraph load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelFormatError("cannot open model file: " + path);
  return parse_model(in);
}

inline void save_model(const DepGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelFormatError("cannot write model file: " + path);
  out << serialize_model(g);
}

// ---- weight blob ----------------------------------------------------------

constexpr char kWeightMagic[4] = {'O', 'L', 'W', '1'};

inline std::vector<uint8_t> serialize_weights(const Weights& w) {
  using namespace wire_io;
  std::vector<uint8_t> out;
  std::vector<std::pair<uint32_t, std::pair<uint64_t, uint64_t>>> index;
  uint64_t off = 0;
  for (const auto& [id, data] : w.by_node) {  // std::map: ascending id order
    index.push_back({id, {off, data.size()}});
    size_t base = out.size();
    out.resize(base + data.size() * 4);
    std::memcpy(out.data() + base, data.data(), data.size() * 4);
    off += data.size();
  }
  for (const auto& [id, loc] : index) {
    put_u32(out, id);
    put_u64(out, loc.first);
    put_u64(out, loc.second);
  }
  put_u32(out, static_cast<uint32_t>(index.size()));
  out.insert(out.end(), kWeightMagic, kWeightMagic + 4);
  return out;
}

inline Weights parse_weights(const std::vector<uint8_t>& blob) {
  if (blob.size() < 8 || std::memcmp(blob.data() + blob.size() - 4, kWeightMagic, 4) != 0)
    throw ModelFormatError("weights: missing footer magic");
  wire_io::Reader tail(blob.data() + blob.size() - 8, 4);
  uint32_t count = tail.u32();
  size_t entry_bytes = size_t(count) * 20;
  if (blob.size() < 8 + entry_bytes)
    throw ModelFormatError("weights: footer index truncated");
  size_t data_bytes = blob.size() - 8 - entry_bytes;
  if (data_bytes % 4 != 0)
    throw ModelFormatError("weights: data region not float-aligned");

  Weights w;
  wire_io::Reader idx(blob.data() + data_bytes, entry_bytes);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t id = idx.u32();
    uint64_t off = idx.u64();
    uint64_t n = idx.u64();
    if ((off + n) * 4 > data_bytes)
      throw ModelFormatError("weights: index entry out of bounds");
    std::vector<float> data(n);
    std::memcpy(data.data(), blob.data() + off * 4, n * 4);
    if (!w.by_node.emplace(id, std::move(data)).second)
      throw ModelFormatError("weights: duplicate node id in index");
  }
  return w;
}

inline void save_weights(const Weights& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelFormatError("cannot write weight file: " + path);
  auto blob = serialize_weights(w);
  out.write(reinterpret_cast<const char*>(blob.data()), blob.size());
}

inline Weights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open weight file: " + path);
  std::vector<uint8_t> blob((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  return parse_weights(blob);
}

// Fingerprint of model structure + weights; both sides of a connection must
// agree on it before exchanging tensors.
inline uint64_t model_digest(const DepGraph& g, const Weights& w) {
  std::string text = serialize_model(g);
  uint64_t h = wire_io::fnv1a(reinterpret_cast<const uint8_t*>(text.data()),
                              text.size());
  auto blob = serialize_weights(w);
  return wire_io::fnv1a(blob.data(), blob.size(), h);
}

// ---- tensor container ------------------------------------------------------

constexpr char kTensorMagic[4] = {'O', 'L', 'T', 'F'};

inline void save_tensor(const Tensor& t, const std::string& path) {
  using namespace wire_io;
  std::vector<uint8_t> out;
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  put_u8(out, 1);
  put_u8(out, static_cast<uint8_t>(t.shape.size()));
  for (uint32_t d : t.shape) put_u32(out, d);
  size_t base = out.size();
  out.resize(base + t.data.size() * 4);
  std::memcpy(out.data() + base, t.data.data(), t.data.size() * 4);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError("cannot write tensor file: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), out.size());
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError("cannot open tensor file: " + path);
  std::vector<uint8_t> blob((std::istreambuf_iterator<char>(f)),
                            std::istreambuf_iterator<char>());
  wire_io::Reader r(blob.data(), blob.size());
  try {
    const uint8_t* magic = r.bytes(4);
    if (std::memcmp(magic, kTensorMagic, 4) != 0)
      throw ModelFormatError("tensor file: bad magic");
    if (r.u8() != 1) throw ModelFormatError("tensor file: bad version");
    uint8_t rank = r.u8();
    std::vector<uint32_t> shape(rank);
    size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      n *= d;
    }
    std::vector<float> data(n);
    const uint8_t* p = r.bytes(n * 4);
    std::memcpy(data.data(), p, n * 4);
    return Tensor(std::move(shape), std::move(data));
  } catch (const CorruptPayload&) {
    throw ModelFormatError("tensor file: truncated");
  }
}

}  // namespace onloadrt
