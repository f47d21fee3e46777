// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/neck.hpp"

#include <algorithm>
#include <set>

#include "finsight/errors.hpp"

namespace finsight::neck {

namespace {

constexpr int kTopLevel = 5;
constexpr int kFirstOutput = 3;

std::string lvl(int l) { return std::to_string(l); }

}  // namespace

std::string to_string(NeckVariant v) {
  switch (v) {
    case NeckVariant::kTopDownFpn: return "topdown-fpn";
    case NeckVariant::kPanet: return "panet";
    case NeckVariant::kEpaFpn: return "epa-fpn";
  }
  return "unknown";
}

NeckVariant parse_variant(std::string_view name) {
  if (name == "topdown" || name == "topdown-fpn" || name == "fpn") {
    return NeckVariant::kTopDownFpn;
  }
  if (name == "panet") return NeckVariant::kPanet;
  if (name == "epa" || name == "epa-fpn") return NeckVariant::kEpaFpn;
  throw ConfigError("unknown neck variant '" + std::string(name) + "'");
}

std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::kInput: return "input";
    case NodeKind::kCbs: return "cbs";
    case NodeKind::kConv: return "conv";
    case NodeKind::kUpsample: return "upsample";
    case NodeKind::kConcat: return "concat";
    case NodeKind::kAdd: return "add";
  }
  return "unknown";
}

std::string to_string(NodeRole r) {
  switch (r) {
    case NodeRole::kSource: return "source";
    case NodeRole::kLateral: return "lateral";
    case NodeRole::kFuse: return "fuse";
    case NodeRole::kDown: return "down";
    case NodeRole::kPsi: return "psi";
    case NodeRole::kTrans: return "trans";
    case NodeRole::kTransSum: return "trans_sum";
    case NodeRole::kOutput: return "output";
    case NodeRole::kResample: return "resample";
  }
  return "unknown";
}

void NeckConfig::validate() const {
  if (width == 0) throw ConfigError("neck width must be positive");
  if (variant != NeckVariant::kEpaFpn) return;
  if (width % 2 != 0) throw ConfigError("epa-fpn width must be even");
  bool long_range = false;
  for (std::size_t i = 0; i < long_skips.size(); ++i) {
    const SkipEdge& e = long_skips[i];
    if (e.source >= e.target) {
      throw ConfigError("skip edge C" + lvl(e.source) + "->P" + lvl(e.target) +
                        " must run shallow to deep");
    }
    if (e.target < kFirstOutput || e.target > kTopLevel || e.source < 2) {
      throw ConfigError("skip edge C" + lvl(e.source) + "->P" + lvl(e.target) +
                        " outside levels 2..5");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (long_skips[j] == e) {
        throw ConfigError("duplicate skip edge C" + lvl(e.source) + "->P" +
                          lvl(e.target));
      }
    }
    long_range = long_range || e.target - e.source >= 2;
  }
  if (!long_skips.empty() && !long_range) {
    throw ConfigError("epa-fpn skip list needs at least one non-adjacent edge");
  }
}

LevelWidths default_backbone_widths() {
  return {{2, 16}, {3, 32}, {4, 64}, {5, 128}};
}

void PyramidFeatures::validate() const {
  const Tensor* prev = nullptr;
  int prev_level = 0;
  for (const auto& [l, t] : levels) {
    if (prev != nullptr) {
      const Shape a = prev->shape(), b = t.shape();
      if (l != prev_level + 1 || a.n != b.n || a.h != 2 * b.h || a.w != 2 * b.w) {
        throw TopologyError("pyramid levels " + lvl(prev_level) + " (" + a.str() +
                            ") and " + lvl(l) + " (" + b.str() +
                            ") are not adjacent 2x scales");
      }
    }
    prev = &t;
    prev_level = l;
  }
}

LevelWidths PyramidFeatures::widths() const {
  LevelWidths w;
  for (const auto& [l, t] : levels) w[l] = t.shape().c;
  return w;
}

int NeckGraph::push(NeckNode n) {
  for (int in : n.inputs) {
    if (in < 0 || in >= static_cast<int>(nodes_.size())) {
      throw TopologyError("node " + n.name + " references unknown input");
    }
  }
  n.id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

int NeckGraph::add_input(int level, std::size_t channels) {
  NeckNode n;
  n.name = "C" + lvl(level);
  n.kind = NodeKind::kInput;
  n.role = NodeRole::kSource;
  n.level = level;
  n.channels = channels;
  return push(std::move(n));
}

int NeckGraph::add_cbs(std::string name, NodeRole role, int src,
                       std::size_t out, std::size_t k, std::size_t stride) {
  const NeckNode& s = node(src);
  NeckNode n;
  n.name = std::move(name);
  n.kind = NodeKind::kCbs;
  n.role = role;
  n.conv = ConvSpec::same(s.channels, out, k, 1, 1, false);
  n.conv.stride = stride;
  n.level = s.level + (stride == 2 ? 1 : 0);
  n.channels = out;
  n.inputs = {src};
  return push(std::move(n));
}

int NeckGraph::add_conv(std::string name, NodeRole role, int src,
                        std::size_t out, std::size_t k, std::size_t stride) {
  const NeckNode& s = node(src);
  NeckNode n;
  n.name = std::move(name);
  n.kind = NodeKind::kConv;
  n.role = role;
  n.conv = ConvSpec::same(s.channels, out, k, 1, 1, true);
  n.conv.stride = stride;
  n.level = s.level + (stride == 2 ? 1 : 0);
  n.channels = out;
  n.inputs = {src};
  return push(std::move(n));
}

int NeckGraph::add_upsample(int src, std::size_t factor) {
  const NeckNode& s = node(src);
  int shift = 0;
  while ((std::size_t{1} << shift) < factor) ++shift;
  NeckNode n;
  n.name = s.name + ".up" + std::to_string(factor);
  n.kind = NodeKind::kUpsample;
  n.role = NodeRole::kResample;
  n.level = s.level - shift;
  n.channels = s.channels;
  n.inputs = {src};
  n.factor = factor;
  return push(std::move(n));
}

int NeckGraph::add_concat(std::string name, NodeRole role,
                          const std::vector<int>& srcs) {
  NeckNode n;
  n.name = std::move(name);
  n.kind = NodeKind::kConcat;
  n.role = role;
  n.level = node(srcs.at(0)).level;
  for (int s : srcs) {
    if (node(s).level != n.level) {
      throw TopologyError("concat " + n.name + " mixes resolution levels");
    }
    n.channels += node(s).channels;
  }
  n.inputs = srcs;
  return push(std::move(n));
}

int NeckGraph::add_add(std::string name, NodeRole role,
                       const std::vector<int>& srcs) {
  NeckNode n;
  n.name = std::move(name);
  n.kind = NodeKind::kAdd;
  n.role = role;
  n.level = node(srcs.at(0)).level;
  n.channels = node(srcs.at(0)).channels;
  for (int s : srcs) {
    if (node(s).level != n.level || node(s).channels != n.channels) {
      throw TopologyError("add " + n.name + " mixes shapes");
    }
  }
  n.inputs = srcs;
  return push(std::move(n));
}

void NeckGraph::set_output(int level, int node_id) {
  (void)node(node_id);
  outputs_[level] = node_id;
}

int NeckGraph::input_node(int level) const {
  for (const NeckNode& n : nodes_) {
    if (n.kind == NodeKind::kInput && n.level == level) return n.id;
  }
  return -1;
}

std::size_t NeckGraph::node_params(const NeckNode& n) const {
  switch (n.kind) {
    case NodeKind::kCbs: return n.conv.param_count() + 2 * n.conv.out_channels;
    case NodeKind::kConv: return n.conv.param_count();
    default: return 0;
  }
}

std::size_t NeckGraph::param_count() const {
  std::size_t total = 0;
  for (const NeckNode& n : nodes_) total += node_params(n);
  return total;
}

std::uint64_t NeckGraph::macs(std::size_t input_size) const {
  std::uint64_t total = 0;
  for (const NeckNode& n : nodes_) {
    if (n.kind != NodeKind::kCbs && n.kind != NodeKind::kConv) continue;
    const std::size_t side = input_size >> n.level;
    total += n.conv.macs(side, side);
  }
  return total;
}

CostReport NeckGraph::cost(std::size_t input_size) const {
  CostReport r;
  r.params = param_count();
  r.macs = macs(input_size);
  r.flops = 2 * r.macs;
  return r;
}

bool NeckGraph::is_acyclic() const {
  for (const NeckNode& n : nodes_) {
    for (int in : n.inputs) {
      if (in >= n.id) return false;
    }
  }
  return true;
}

nlohmann::json NeckGraph::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  for (const NeckNode& n : nodes_) {
    nlohmann::json j = {{"id", n.id},
                        {"name", n.name},
                        {"op", to_string(n.kind)},
                        {"role", to_string(n.role)},
                        {"level", n.level},
                        {"channels", n.channels},
                        {"params", node_params(n)}};
    if (n.kind == NodeKind::kCbs || n.kind == NodeKind::kConv) {
      j["kernel"] = n.conv.kernel_h;
      j["stride"] = n.conv.stride;
    }
    nodes.push_back(std::move(j));
    for (int in : n.inputs) {
      // A single-input op owns its parameters on its one incoming edge.
      const std::size_t p = n.inputs.size() == 1 ? node_params(n) : 0;
      edges.push_back({{"from", in}, {"to", n.id}, {"params", p}});
    }
  }
  nlohmann::json outs = nlohmann::json::object();
  for (const auto& [l, id] : outputs_) outs["P" + lvl(l)] = id;
  return {{"nodes", nodes}, {"edges", edges}, {"outputs", outs},
          {"params", param_count()}};
}

namespace {

// Top-down pass over the present levels; returns level -> node id.
std::map<int, int> build_topdown(NeckGraph& g, const std::map<int, int>& c,
                                 std::size_t width, const std::string& prefix) {
  std::map<int, int> p;
  p[kTopLevel] = g.add_cbs(prefix + "lateral5", NodeRole::kLateral,
                           c.at(kTopLevel), width, 1, 1);
  for (int l = kTopLevel - 1; l >= kFirstOutput && c.count(l) != 0; --l) {
    const int up = g.add_upsample(p.at(l + 1), 2);
    const int cat = g.add_concat(prefix + "cat" + lvl(l), NodeRole::kFuse,
                                 {c.at(l), up});
    p[l] = g.add_cbs(prefix + "fuse" + lvl(l), NodeRole::kFuse, cat, width, 3, 1);
  }
  return p;
}

// Resample `src` from level `from` to level `to` and project to `out`.
int build_trans(NeckGraph& g, int src, int from, int to, std::size_t out,
                const std::string& name) {
  int cur = src;
  if (from > to) {
    cur = g.add_upsample(cur, std::size_t{1} << (from - to));
  } else {
    for (int l = from; l < to; ++l) {
      cur = g.add_conv(name + ".down" + lvl(l + 1), NodeRole::kTrans, cur,
                       g.node(cur).channels, 3, 2);
    }
  }
  return g.add_conv(name + ".proj", NodeRole::kTrans, cur, out, 1, 1);
}

void require_levels(const std::map<int, int>& c, std::initializer_list<int> levels,
                    NeckVariant v) {
  for (int l : levels) {
    if (c.count(l) == 0) {
      throw TopologyError(to_string(v) + " requires level C" + lvl(l));
    }
  }
}

}  // namespace

NeckGraph build_graph(const NeckConfig& cfg, const LevelWidths& inputs) {
  cfg.validate();
  if (inputs.count(kTopLevel) == 0) throw TopologyError("neck requires level C5");
  for (const auto& [l, w] : inputs) {
    if (l < 2 || l > kTopLevel || w == 0) {
      throw TopologyError("invalid pyramid level C" + lvl(l));
    }
  }
  for (int l = inputs.begin()->first; l < kTopLevel; ++l) {
    if (inputs.count(l) == 0) {
      throw TopologyError("pyramid is missing level C" + lvl(l));
    }
  }

  NeckGraph g;
  std::map<int, int> c;
  for (const auto& [l, w] : inputs) c[l] = g.add_input(l, w);
  const std::size_t W = cfg.width;

  switch (cfg.variant) {
    case NeckVariant::kTopDownFpn: {
      for (const auto& [l, id] : build_topdown(g, c, W, "")) g.set_output(l, id);
      break;
    }
    case NeckVariant::kPanet: {
      require_levels(c, {3, 4, 5}, cfg.variant);
      const std::map<int, int> p = build_topdown(g, c, W, "td.");
      std::map<int, int> q{{3, p.at(3)}};
      for (int l = 4; l <= kTopLevel; ++l) {
        const int down = g.add_cbs("bu.down" + lvl(l), NodeRole::kDown, q.at(l - 1),
                                   W, 3, 2);
        const int cat = g.add_concat("bu.cat" + lvl(l), NodeRole::kFuse,
                                     {down, p.at(l)});
        q[l] = g.add_cbs("bu.fuse" + lvl(l), NodeRole::kFuse, cat, W, 3, 1);
      }
      for (const auto& [l, id] : q) g.set_output(l, id);
      break;
    }
    case NeckVariant::kEpaFpn: {
      require_levels(c, {3, 4, 5}, cfg.variant);
      for (const SkipEdge& e : cfg.long_skips) {
        if (c.count(e.source) == 0) {
          throw TopologyError("skip edge C" + lvl(e.source) + "->P" +
                              lvl(e.target) + " references absent level");
        }
      }
      const std::map<int, int> pin = build_topdown(g, c, W, "in.");
      const std::size_t half = W / 2;
      for (int l = kFirstOutput; l <= kTopLevel; ++l) {
        const std::string base = "out" + lvl(l);
        const int psi = g.add_cbs(base + ".psi", NodeRole::kPsi, c.at(l), half, 1, 1);
        // Single nearest cross level: the finer neighbour, or P4 for P3.
        const int j = l == kFirstOutput ? l + 1 : l - 1;
        std::vector<int> trans{
            build_trans(g, pin.at(j), j, l, half, base + ".trans_p" + lvl(j))};
        for (const SkipEdge& e : cfg.long_skips) {
          if (e.target != l) continue;
          trans.push_back(build_trans(g, c.at(e.source), e.source, l, half,
                                      base + ".skip_c" + lvl(e.source)));
        }
        const int tsum = trans.size() == 1
                             ? trans[0]
                             : g.add_add(base + ".trans_sum", NodeRole::kTransSum, trans);
        g.set_output(l, g.add_concat(base, NodeRole::kOutput, {psi, tsum}));
      }
      break;
    }
  }
  return g;
}

CostReport count_cost(const NeckConfig& cfg, const LevelWidths& widths,
                      std::size_t input_size) {
  return build_graph(cfg, widths).cost(input_size);
}

double reduction_ratio(std::size_t a, std::size_t b) {
  return 1.0 - static_cast<double>(a) / static_cast<double>(b);
}

std::vector<std::string> epa_structure_violations(const NeckGraph& g) {
  std::vector<std::string> v;
  if (!g.is_acyclic()) v.push_back("graph has a back edge");
  for (const auto& [l, id] : g.outputs()) {
    const NeckNode& out = g.node(id);
    bool psi = false, trans = false;
    for (int in : out.inputs) {
      const NodeRole r = g.node(in).role;
      psi = psi || r == NodeRole::kPsi;
      trans = trans || r == NodeRole::kTrans || r == NodeRole::kTransSum;
    }
    if (!psi) v.push_back("P" + lvl(l) + " has no lateral Psi input");
    if (!trans) v.push_back("P" + lvl(l) + " has no cross-level Trans input");
  }
  return v;
}

NeckNet NeckNet::create(ParamStore& store, const std::string& name,
                        const NeckConfig& cfg, const LevelWidths& inputs,
                        Rng& rng) {
  NeckNet net;
  net.cfg_ = cfg;
  net.graph_ = build_graph(cfg, inputs);
  for (const NeckNode& n : net.graph_.nodes()) {
    const std::string pname = name + "." + n.name;
    if (n.kind == NodeKind::kCbs) {
      net.cbs[n.id] = CbsBlock::create(store, pname, n.conv.in_channels,
                                       n.conv.out_channels, n.conv.kernel_h,
                                       n.conv.stride, rng);
    } else if (n.kind == NodeKind::kConv) {
      net.convs[n.id] = ConvLayer::create(store, pname, n.conv, rng);
    }
  }
  return net;
}

std::map<int, Var> NeckNet::operator()(Tape& t, const std::map<int, Var>& c) const {
  std::vector<Var> v(graph_.nodes().size());
  for (const NeckNode& n : graph_.nodes()) {
    switch (n.kind) {
      case NodeKind::kInput: {
        const auto it = c.find(n.level);
        if (it == c.end()) throw TopologyError("missing input level C" + lvl(n.level));
        if (t.value(it->second).shape().c != n.channels) {
          throw DimensionError("level C" + lvl(n.level) + " has " +
                               std::to_string(t.value(it->second).shape().c) +
                               " channels, neck expects " + std::to_string(n.channels));
        }
        v[n.id] = it->second;
        break;
      }
      case NodeKind::kCbs: v[n.id] = cbs.at(n.id)(t, v[n.inputs[0]]); break;
      case NodeKind::kConv: v[n.id] = convs.at(n.id)(t, v[n.inputs[0]]); break;
      case NodeKind::kUpsample: v[n.id] = ag::upsample(t, v[n.inputs[0]], n.factor); break;
      case NodeKind::kConcat:
      case NodeKind::kAdd: {
        std::vector<Var> parts;
        for (int in : n.inputs) parts.push_back(v[in]);
        if (n.kind == NodeKind::kConcat) {
          v[n.id] = ag::concat(t, parts);
        } else {
          Var acc = parts[0];
          for (std::size_t i = 1; i < parts.size(); ++i) acc = ag::add(t, acc, parts[i]);
          v[n.id] = acc;
        }
        break;
      }
    }
  }
  std::map<int, Var> out;
  for (const auto& [l, id] : graph_.outputs()) out[l] = v[id];
  return out;
}

PyramidFeatures NeckNet::forward(const PyramidFeatures& c) const {
  c.validate();
  Tape t(false);
  std::map<int, Var> in;
  for (const auto& [l, x] : c.levels) {
    if (graph_.input_node(l) < 0) throw TopologyError("neck has no input C" + lvl(l));
    in[l] = t.constant(x);
  }
  PyramidFeatures p;
  for (const auto& [l, v] : (*this)(t, in)) p.levels[l] = t.value(v);
  return p;
}

void NeckNet::zero_trans() {
  for (auto& [id, layer] : convs) {
    if (graph_.node(id).role == NodeRole::kTrans) layer.set_zero();
  }
}

namespace {

PyramidFeatures run_variant(const PyramidFeatures& c, const NeckNet& net,
                            NeckVariant expected) {
  if (net.config().variant != expected) {
    throw ConfigError("neck is " + to_string(net.config().variant) + ", expected " +
                      to_string(expected));
  }
  return net.forward(c);
}

}  // namespace

PyramidFeatures build_topdown_fpn(const PyramidFeatures& c, const NeckNet& net) {
  return run_variant(c, net, NeckVariant::kTopDownFpn);
}

PyramidFeatures build_panet(const PyramidFeatures& c, const NeckNet& net) {
  return run_variant(c, net, NeckVariant::kPanet);
}

PyramidFeatures build_epafpn(const PyramidFeatures& c, const NeckNet& net) {
  return run_variant(c, net, NeckVariant::kEpaFpn);
}

}  // namespace finsight::neck
