// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Feature-pyramid necks expressed as explicit fusion graphs.
//
// A NeckGraph is the single description of a neck: it drives evaluation,
// parameter and MAC accounting, the JSON graph dump, and the structural
// checks. Three variants are built from it:
//
//   topdown-fpn  P5 = CBS1x1(C5); P_i = CBS3x3(C_i ++ Up(P_{i+1}))
//   panet        topdown-fpn followed by a stride-2 bottom-up pass
//   epa-fpn      topdown-fpn producing P^in, then per output level
//                P_i = Concat(Psi(C_i), Trans(P^in_j) [+ Trans(C_s) ...])
//                with no bottom-up pass; C_s -> P_i are long-range skips.

#ifndef FINSIGHT_NECK_HPP_
#define FINSIGHT_NECK_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "finsight/autograd.hpp"
#include "finsight/nn.hpp"
#include "json.hpp"

namespace finsight::neck {

enum class NeckVariant { kTopDownFpn, kPanet, kEpaFpn };

std::string to_string(NeckVariant v);
// Accepts topdown|topdown-fpn|fpn, panet, epa|epa-fpn. ConfigError otherwise.
NeckVariant parse_variant(std::string_view name);

struct SkipEdge {
  int source = 2;
  int target = 4;
  bool operator==(const SkipEdge&) const = default;
};

struct NeckConfig {
  NeckVariant variant = NeckVariant::kEpaFpn;
  std::size_t width = 64;
  std::vector<SkipEdge> long_skips{{2, 4}, {3, 5}};

  void validate() const;
};

// Channel width per present backbone level (2..5).
using LevelWidths = std::map<int, std::size_t>;
LevelWidths default_backbone_widths();  // {2:16, 3:32, 4:64, 5:128}

/// Level index -> N x C x H x W feature map. Level l has stride 2^l.
struct PyramidFeatures {
  std::map<int, Tensor> levels;

  static std::size_t stride(int level) { return std::size_t{1} << level; }
  // Adjacent present levels must differ by exactly 2x spatially and share N.
  void validate() const;
  LevelWidths widths() const;
};

enum class NodeKind { kInput, kCbs, kConv, kUpsample, kConcat, kAdd };
enum class NodeRole {
  kSource,    // backbone level
  kLateral,   // 1x1 entry conv of the top-down pass
  kFuse,      // top-down or bottom-up fusion conv
  kDown,      // PANet stride-2 conv
  kPsi,       // EPA alignment of C_i
  kTrans,     // EPA resample / projection of a cross-level source
  kTransSum,  // sum of all Trans inputs into one level
  kOutput,    // EPA output concat
  kResample   // upsample helper
};

std::string to_string(NodeKind k);
std::string to_string(NodeRole r);

struct NeckNode {
  int id = 0;
  std::string name;
  NodeKind kind = NodeKind::kInput;
  NodeRole role = NodeRole::kSource;
  int level = 0;  // resolution level of the node's output
  std::size_t channels = 0;
  std::vector<int> inputs;
  ConvSpec conv;           // kCbs / kConv
  std::size_t factor = 1;  // kUpsample
};

struct CostReport {
  std::size_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t flops = 0;  // 2 * macs
};

class NeckGraph {
 public:
  int add_input(int level, std::size_t channels);
  int add_cbs(std::string name, NodeRole role, int src, std::size_t out,
              std::size_t k, std::size_t stride);
  int add_conv(std::string name, NodeRole role, int src, std::size_t out,
               std::size_t k, std::size_t stride);
  int add_upsample(int src, std::size_t factor);
  int add_concat(std::string name, NodeRole role, const std::vector<int>& srcs);
  int add_add(std::string name, NodeRole role, const std::vector<int>& srcs);
  void set_output(int level, int node);

  const std::vector<NeckNode>& nodes() const { return nodes_; }
  const NeckNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const std::map<int, int>& outputs() const { return outputs_; }
  int input_node(int level) const;

  std::size_t node_params(const NeckNode& n) const;
  std::size_t param_count() const;
  // Conv MACs for one image of size input_size x input_size.
  std::uint64_t macs(std::size_t input_size) const;
  CostReport cost(std::size_t input_size) const;

  // Every input refers to an earlier node: the graph is a DAG in id order.
  bool is_acyclic() const;
  nlohmann::json to_json() const;

 private:
  int push(NeckNode n);

  std::vector<NeckNode> nodes_;
  std::map<int, int> outputs_;
};

// TopologyError for missing/inconsistent levels or bad skip edges.
NeckGraph build_graph(const NeckConfig& cfg, const LevelWidths& inputs);

// Parameter count and conv MACs at a square reference input.
CostReport count_cost(const NeckConfig& cfg,
                      const LevelWidths& widths = default_backbone_widths(),
                      std::size_t input_size = 640);

// 1 - a/b.
double reduction_ratio(std::size_t a, std::size_t b);

// Output nodes each have >= 1 Psi input and >= 1 Trans input, and the
// graph is acyclic. Lists violations; empty when the structure is sound.
std::vector<std::string> epa_structure_violations(const NeckGraph& g);

/// A NeckGraph with instantiated parameters.
class NeckNet {
 public:
  static NeckNet create(ParamStore& store, const std::string& name,
                        const NeckConfig& cfg, const LevelWidths& inputs,
                        Rng& rng);

  std::map<int, Var> operator()(Tape& t, const std::map<int, Var>& c) const;
  PyramidFeatures forward(const PyramidFeatures& c) const;

  const NeckGraph& graph() const { return graph_; }
  const NeckConfig& config() const { return cfg_; }
  std::size_t param_count() const { return graph_.param_count(); }

  // Layers by node id, for initialization in tests and tools.
  std::map<int, CbsBlock> cbs;
  std::map<int, ConvLayer> convs;

  // Zero every conv feeding a Trans path.
  void zero_trans();

 private:
  NeckConfig cfg_;
  NeckGraph graph_;
};

// Variant-checked wrappers; ConfigError if `net` is another variant.
PyramidFeatures build_topdown_fpn(const PyramidFeatures& c, const NeckNet& net);
PyramidFeatures build_panet(const PyramidFeatures& c, const NeckNet& net);
PyramidFeatures build_epafpn(const PyramidFeatures& c, const NeckNet& net);

}  // namespace finsight::neck

#endif  // FINSIGHT_NECK_HPP_
