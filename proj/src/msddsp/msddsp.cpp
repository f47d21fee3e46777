// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/msddsp.hpp"

#include <string>

#include "finsight/errors.hpp"

namespace finsight::msddsp {

void MsDdspConfig::validate() const {
  if (channels == 0 || channels % kBranches != 0) {
    throw DivisibilityError("msddsp: channels " + std::to_string(channels) +
                            " not divisible by 4");
  }
  if (dilations.empty()) throw ConfigError("msddsp: empty dilation schedule");
  for (std::size_t d : dilations) {
    if (d == 0) throw ConfigError("msddsp: dilations must be positive");
  }
  if (squeeze_ratio == 0 || quarter() % squeeze_ratio != 0) {
    throw ConfigError("msddsp: squeeze ratio " + std::to_string(squeeze_ratio) +
                      " does not divide " + std::to_string(quarter()) +
                      " channels");
  }
}

std::size_t receptive_field(std::span<const std::size_t> dilations,
                            std::size_t kernel) {
  std::size_t rf = 1;
  for (std::size_t d : dilations) rf += d * (kernel - 1);
  return rf;
}

Branch1 Branch1::create(ParamStore& store, const std::string& name,
                        std::size_t channels,
                        const std::vector<std::size_t>& dilations, Rng& rng) {
  Branch1 b;
  b.dilations = dilations;
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    b.stages.push_back(ConvLayer::create(
        store, name + ".stage" + std::to_string(i),
        ConvSpec::same(channels, channels, 3, dilations[i]), rng));
  }
  return b;
}

Var Branch1::operator()(Tape& t, Var x) const {
  const Shape s = t.value(x).shape();
  Var h = x;
  for (const ConvLayer& stage : stages) {
    if (stage.spec.padding >= s.h || stage.spec.padding >= s.w) {
      throw GeometryError("branch1: dilation " +
                          std::to_string(stage.spec.dilation) +
                          " too large for a " + std::to_string(s.h) + "x" +
                          std::to_string(s.w) + " map");
    }
    h = ag::scale(t, ag::add(t, h, stage(t, h)), 0.5);
  }
  return h;
}

void Branch1::set_identity() {
  for (ConvLayer& s : stages) s.set_identity();
}

std::size_t Branch1::param_count() const {
  std::size_t n = 0;
  for (const ConvLayer& s : stages) n += s.param_count();
  return n;
}

Branch2 Branch2::create(ParamStore& store, const std::string& name,
                        std::size_t channels, Rng& rng) {
  Branch2 b;
  b.spec = SeparableSpec{channels, channels, 3, 1, true};
  b.depthwise = ConvLayer::create(store, name + ".dw", b.spec.depthwise(), rng);
  b.pointwise = ConvLayer::create(store, name + ".pw", b.spec.pointwise(), rng);
  return b;
}

Var Branch2::operator()(Tape& t, Var x) const {
  return pointwise(t, depthwise(t, x));
}

void Branch2::set_identity() {
  depthwise.set_identity();
  pointwise.set_identity();
}

Branch3 Branch3::create(ParamStore& store, const std::string& name,
                        std::size_t channels, std::size_t ratio, Rng& rng) {
  if (ratio == 0 || channels % ratio != 0) {
    throw ConfigError("branch3: squeeze ratio " + std::to_string(ratio) +
                      " does not divide " + std::to_string(channels));
  }
  Branch3 b;
  b.squeeze = ConvLayer::create(store, name + ".squeeze",
                                ConvSpec::pointwise(channels, channels / ratio), rng);
  b.excite = ConvLayer::create(store, name + ".excite",
                               ConvSpec::pointwise(channels / ratio, channels), rng);
  return b;
}

Var Branch3::gate(Tape& t, Var x) const {
  const Var pooled = ag::gap(t, x);
  return ag::sigmoid(t, excite(t, ag::silu(t, squeeze(t, pooled))));
}

Var Branch3::operator()(Tape& t, Var x) const {
  return ag::channel_scale(t, x, gate(t, x));
}

void Branch3::set_constant_gate(double logit) {
  squeeze.set_zero();
  excite.weight->value.fill(0.0);
  excite.bias->value.fill(logit);
}

std::size_t Branch3::param_count() const {
  return squeeze.param_count() + excite.param_count();
}

std::array<double, kBranches> BranchWeights::mean_beta() const {
  std::array<double, kBranches> m{};
  for (std::size_t k = 0; k < kBranches; ++k) {
    m[k] = beta[k].numel() == 0 ? 0.0
                                : beta[k].sum() / static_cast<double>(beta[k].numel());
  }
  return m;
}

FuseVars attention_fuse(Tape& t, const std::array<Var, kBranches>& branches) {
  const Shape s = t.value(branches[0]).shape();
  for (Var b : branches) {
    if (t.value(b).shape() != s) {
      throw DimensionError("attention_fuse: branch " + t.value(b).shape().str() +
                           " vs " + s.str());
    }
  }
  FuseVars out;
  std::vector<Var> stats;
  for (std::size_t k = 0; k < kBranches; ++k) {
    out.stats[k] = ag::gap(t, branches[k]);
    stats.push_back(out.stats[k]);
  }
  const std::vector<Var> beta = ag::split(t, ag::softmax_across(t, stats), kBranches);
  std::vector<Var> weighted;
  for (std::size_t k = 0; k < kBranches; ++k) {
    out.beta[k] = beta[k];
    weighted.push_back(ag::channel_scale(t, branches[k], beta[k]));
  }
  out.y = ag::concat(t, weighted);
  return out;
}

std::pair<Tensor, BranchWeights> attention_fuse(
    const std::array<Tensor, kBranches>& branches) {
  Tape t(false);
  std::array<Var, kBranches> vars;
  for (std::size_t k = 0; k < kBranches; ++k) vars[k] = t.constant(branches[k]);
  const FuseVars f = attention_fuse(t, vars);
  BranchWeights w;
  for (std::size_t k = 0; k < kBranches; ++k) {
    w.stats[k] = t.value(f.stats[k]);
    w.beta[k] = t.value(f.beta[k]);
  }
  return {t.value(f.y), std::move(w)};
}

MsDdspBlock MsDdspBlock::create(ParamStore& store, const std::string& name,
                                const MsDdspConfig& cfg, Rng& rng) {
  cfg.validate();
  MsDdspBlock b;
  b.cfg_ = cfg;
  const std::size_t c = cfg.channels, q = cfg.quarter();
  b.adjust = CbsBlock::create(store, name + ".adjust", c, c, 1, 1, rng);
  b.branch1 = Branch1::create(store, name + ".b1", q, cfg.dilations, rng);
  b.branch2 = Branch2::create(store, name + ".b2", q, rng);
  b.branch3 = Branch3::create(store, name + ".b3", q, cfg.squeeze_ratio, rng);
  b.project = CbsBlock::create(store, name + ".project", c, c, 1, 1, rng);
  return b;
}

BlockTrace MsDdspBlock::trace(Tape& t, Var x) const {
  if (t.value(x).shape().c != cfg_.channels) {
    throw DimensionError("msddsp: input has " +
                         std::to_string(t.value(x).shape().c) +
                         " channels, block expects " +
                         std::to_string(cfg_.channels));
  }
  BlockTrace tr;
  tr.adjusted = adjust(t, x);
  const std::vector<Var> parts = ag::split(t, tr.adjusted, kBranches);
  tr.branches = {branch1(t, parts[0]), branch2(t, parts[1]),
                 branch3(t, parts[2]), parts[3]};
  for (std::size_t k = 0; k < kBranches; ++k) {
    if (!cfg_.branch_enabled[k]) {
      tr.branches[k] = t.constant(Tensor(t.value(parts[k]).shape()));
    }
  }
  tr.fused = attention_fuse(t, tr.branches);
  tr.output = project(t, tr.fused.y);
  return tr;
}

Tensor MsDdspBlock::forward(const Tensor& x, BranchWeights* weights) const {
  Tape t(false);
  const BlockTrace tr = trace(t, t.constant(x));
  if (weights != nullptr) {
    for (std::size_t k = 0; k < kBranches; ++k) {
      weights->stats[k] = t.value(tr.fused.stats[k]);
      weights->beta[k] = t.value(tr.fused.beta[k]);
    }
  }
  return t.value(tr.output);
}

std::size_t MsDdspBlock::param_count() const {
  return adjust.param_count() + branch1.param_count() + branch2.param_count() +
         branch3.param_count() + project.param_count();
}

namespace {

template <typename Fn>
Tensor run_single(const Tensor& x, Fn&& fn) {
  Tape t(false);
  return t.value(fn(t, t.constant(x)));
}

}  // namespace

Tensor branch1_multiscale(const Tensor& x, const Branch1& params) {
  return run_single(x, [&](Tape& t, Var v) { return params(t, v); });
}

Tensor branch2_decorrelate(const Tensor& x, const Branch2& params) {
  return run_single(x, [&](Tape& t, Var v) { return params(t, v); });
}

Tensor branch3_channel_weight(const Tensor& x, const Branch3& params) {
  return run_single(x, [&](Tape& t, Var v) { return params(t, v); });
}

Tensor branch4_identity(const Tensor& x) { return x; }

Tensor msddsp_forward(const Tensor& x, const MsDdspBlock& block) {
  return block.forward(x);
}

nlohmann::json branch_weight_dump(
    const std::vector<std::pair<std::string, BranchWeights>>& entries) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, w] : entries) {
    const auto m = w.mean_beta();
    out.push_back({{"input", id}, {"beta", {m[0], m[1], m[2], m[3]}}});
  }
  return out;
}

}  // namespace finsight::msddsp
