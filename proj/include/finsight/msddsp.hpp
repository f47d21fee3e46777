// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Multi-scale decoupled bottleneck.
//
// The block splits its (adjusted) input into four channel quarters and runs
// one heterogeneous branch per quarter:
//   1. stacked dilated 3x3 convolutions (staged receptive-field growth)
//   2. depthwise 3x3 + pointwise 1x1 (spatial/channel decorrelation)
//   3. squeeze-excitation gate (inter-channel reweighting)
//   4. identity (detail preservation, no nonlinearity)
// Branch outputs are pooled to per-channel statistics, turned into
// softmax weights across the four branches, and merged by weighted
// concatenation so the block is shape preserving.

#ifndef FINSIGHT_MSDDSP_HPP_
#define FINSIGHT_MSDDSP_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "finsight/autograd.hpp"
#include "finsight/nn.hpp"
#include "json.hpp"

namespace finsight::msddsp {

inline constexpr std::size_t kBranches = 4;

enum class FusionMode { kWeightedConcat };

struct MsDdspConfig {
  std::size_t channels = 64;
  std::vector<std::size_t> dilations{1, 2, 3};
  std::size_t squeeze_ratio = 4;
  FusionMode fusion = FusionMode::kWeightedConcat;
  // A disabled branch emits zeros (ablation).
  std::array<bool, kBranches> branch_enabled{true, true, true, true};

  // DivisibilityError if channels % 4 != 0; ConfigError otherwise.
  void validate() const;
  std::size_t quarter() const { return channels / kBranches; }
};

// Receptive field of stacked k x k convolutions: 1 + sum d (k - 1).
std::size_t receptive_field(std::span<const std::size_t> dilations,
                            std::size_t kernel = 3);

struct Branch1 {
  std::vector<std::size_t> dilations;
  std::vector<ConvLayer> stages;

  static Branch1 create(ParamStore& store, const std::string& name,
                        std::size_t channels,
                        const std::vector<std::size_t>& dilations, Rng& rng);
  // Stage k: h <- (h + conv_k(h)) / 2. Identity kernels give the identity.
  Var operator()(Tape& t, Var x) const;
  void set_identity();
  std::size_t param_count() const;
};

struct Branch2 {
  SeparableSpec spec;
  ConvLayer depthwise;
  ConvLayer pointwise;

  static Branch2 create(ParamStore& store, const std::string& name,
                        std::size_t channels, Rng& rng);
  Var operator()(Tape& t, Var x) const;
  void set_identity();
  std::size_t param_count() const { return spec.param_count(); }
};

struct Branch3 {
  ConvLayer squeeze;  // C/4 -> C/4/r on the pooled vector
  ConvLayer excite;   // C/4/r -> C/4

  static Branch3 create(ParamStore& store, const std::string& name,
                        std::size_t channels, std::size_t ratio, Rng& rng);
  // Returns the sigmoid gate, N x C x 1 x 1.
  Var gate(Tape& t, Var x) const;
  Var operator()(Tape& t, Var x) const;
  // Zero weights and a constant excitation bias: gate = sigmoid(bias).
  void set_constant_gate(double logit);
  std::size_t param_count() const;
};

/// Per-branch statistics S^n (N x C/4 x 1 x 1) and weights beta^n.
struct BranchWeights {
  std::array<Tensor, kBranches> stats;
  std::array<Tensor, kBranches> beta;

  // Mean of beta^n over batch and channel positions.
  std::array<double, kBranches> mean_beta() const;
};

struct FuseVars {
  Var y;
  std::array<Var, kBranches> stats;
  std::array<Var, kBranches> beta;
};

FuseVars attention_fuse(Tape& t, const std::array<Var, kBranches>& branches);
std::pair<Tensor, BranchWeights> attention_fuse(
    const std::array<Tensor, kBranches>& branches);

struct BlockTrace {
  Var adjusted;
  std::array<Var, kBranches> branches;
  FuseVars fused;
  Var output;
};

class MsDdspBlock {
 public:
  static MsDdspBlock create(ParamStore& store, const std::string& name,
                            const MsDdspConfig& cfg, Rng& rng);

  Var operator()(Tape& t, Var x) const { return trace(t, x).output; }
  BlockTrace trace(Tape& t, Var x) const;
  Tensor forward(const Tensor& x, BranchWeights* weights = nullptr) const;
  std::size_t param_count() const;

  const MsDdspConfig& config() const { return cfg_; }
  MsDdspConfig& config() { return cfg_; }

  CbsBlock adjust;
  Branch1 branch1;
  Branch2 branch2;
  Branch3 branch3;
  CbsBlock project;

 private:
  MsDdspConfig cfg_;
};

// Tensor-level entry points over a single branch.
Tensor branch1_multiscale(const Tensor& x, const Branch1& params);
Tensor branch2_decorrelate(const Tensor& x, const Branch2& params);
Tensor branch3_channel_weight(const Tensor& x, const Branch3& params);
Tensor branch4_identity(const Tensor& x);
Tensor msddsp_forward(const Tensor& x, const MsDdspBlock& block);

// [{"input": id, "beta": [b1, b2, b3, b4]}, ...] in the given order.
nlohmann::json branch_weight_dump(
    const std::vector<std::pair<std::string, BranchWeights>>& entries);

}  // namespace finsight::msddsp

#endif  // FINSIGHT_MSDDSP_HPP_
