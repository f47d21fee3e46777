// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/oracle.hpp"

#include <algorithm>
#include <map>

#include "finsight/errors.hpp"
#include "finsight/gradcheck.hpp"
#include "finsight/msddsp.hpp"
#include "finsight/neck.hpp"
#include "finsight/nn.hpp"
#include "finsight/rng.hpp"

namespace finsight::oracle {

namespace {

constexpr std::size_t kParamSamples = 6;

Tensor random(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return rng.uniform_tensor(s, lo, hi);
}

Tensor projection(const Shape& s, std::uint64_t seed) { return random(s, seed ^ 0xA5A5u); }

// Checks d(sum(r * forward()))/d(param) for a few sampled entries of every
// parameter in `store`.
double param_grad_error(ParamStore& store, const std::function<Var(Tape&)>& forward,
                        std::uint64_t seed, double eps) {
  Tensor r;
  {
    Tape probe(false);
    r = projection(probe.value(forward(probe)).shape(), seed);
  }
  store.zero_grad();
  {
    Tape t;
    t.backward(ag::weighted_sum(t, forward(t), r));
  }
  Rng rng(seed + 17);
  double worst = 0.0;
  for (Parameter& p : store) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < std::min(kParamSamples, p.value.numel()); ++k) {
      idx.push_back(static_cast<std::size_t>(
          rng.integer(0, static_cast<std::int64_t>(p.value.numel()) - 1)));
    }
    Tensor& value = p.value;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& probe) {
          const Tensor saved = value;
          value = probe;
          Tape t(false);
          const double s = t.value(ag::weighted_sum(t, forward(t), r))[0];
          value = saved;
          return s;
        },
        value, eps, idx);
    worst = std::max(worst, relative_error(p.grad, numeric, idx, 1e-6));
  }
  return worst;
}

// Nonzero norm shifts keep SiLU away from its origin.
void shift_norms(ParamStore& store, std::uint64_t seed) {
  for (Parameter& p : store) {
    if (p.name.ends_with(".beta")) p.value = random(p.value.shape(), seed, -0.5, 0.5);
  }
}

ConvSpec make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                   std::size_t dilation, std::size_t groups) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.dilation = dilation;
  s.padding = dilation * (k - 1) / 2;
  s.groups = groups;
  s.has_bias = true;
  return s;
}

double conv_error(const ConvSpec& s, std::uint64_t seed, double eps) {
  const Tensor x = random(Shape{2, s.in_channels, 7, 6}, seed);
  const Tensor w = random(s.weight_shape(), seed + 1);
  const Tensor b = random(Shape{1, s.out_channels, 1, 1}, seed + 2);
  const double ex = tape_grad_error(
      [&](Tape& t, Var v) { return ag::conv2d(t, v, s, t.constant(w), t.constant(b)); }, x, seed,
      eps);
  const double ew = tape_grad_error(
      [&](Tape& t, Var v) { return ag::conv2d(t, t.constant(x), s, v, t.constant(b)); }, w,
      seed + 3, eps);
  const double eb = tape_grad_error(
      [&](Tape& t, Var v) { return ag::conv2d(t, t.constant(x), s, t.constant(w), v); }, b,
      seed + 4, eps);
  return std::max({ex, ew, eb});
}

double depthwise_separable_error(std::uint64_t seed, double eps) {
  ParamStore store;
  Rng rng(seed);
  const msddsp::Branch2 b = msddsp::Branch2::create(store, "b2", 4, rng);
  const Tensor x = random(Shape{2, 4, 6, 6}, seed + 1);
  const double ex = tape_grad_error([&](Tape& t, Var v) { return b(t, v); }, x, seed, eps);
  return std::max(ex, param_grad_error(store, [&](Tape& t) { return b(t, t.constant(x)); },
                                       seed, eps));
}

double gap_error(std::uint64_t seed, double eps) {
  return tape_grad_error([](Tape& t, Var v) { return ag::gap(t, v); },
                         random(Shape{2, 3, 5, 4}, seed), seed, eps);
}

double silu_error(std::uint64_t seed, double eps) {
  return tape_grad_error([](Tape& t, Var v) { return ag::silu(t, v); },
                         random(Shape{2, 3, 4, 4}, seed, -4.0, 4.0), seed, eps);
}

double softmax_fusion_error(std::uint64_t seed, double eps) {
  // x holds the four branch outputs side by side in channels.
  const Tensor x = random(Shape{2, 12, 4, 4}, seed, -2.0, 2.0);
  return tape_grad_error(
      [](Tape& t, Var v) {
        const std::vector<Var> parts = ag::split(t, v, msddsp::kBranches);
        return msddsp::attention_fuse(t, {parts[0], parts[1], parts[2], parts[3]}).y;
      },
      x, seed, eps);
}

double se_gate_error(std::uint64_t seed, double eps) {
  ParamStore store;
  Rng rng(seed);
  const msddsp::Branch3 b = msddsp::Branch3::create(store, "b3", 8, 2, rng);
  const Tensor x = random(Shape{2, 8, 5, 5}, seed + 1);
  const double ex = tape_grad_error([&](Tape& t, Var v) { return b(t, v); }, x, seed, eps);
  return std::max(ex, param_grad_error(store, [&](Tape& t) { return b(t, t.constant(x)); },
                                       seed, eps));
}

double neck_fusion_error(std::uint64_t seed, double eps) {
  const neck::LevelWidths widths{{2, 2}, {3, 2}, {4, 3}, {5, 3}};
  neck::NeckConfig cfg;
  cfg.variant = neck::NeckVariant::kEpaFpn;
  cfg.width = 4;
  ParamStore store;
  Rng rng(seed);
  const neck::NeckNet net = neck::NeckNet::create(store, "n", cfg, widths, rng);
  shift_norms(store, seed + 1);
  std::map<int, Tensor> c;
  for (const auto& [l, ch] : widths) {
    const std::size_t side = std::size_t{16} >> (l - 2);
    c[l] = random(Shape{1, ch, side, side}, seed + 10 + static_cast<std::uint64_t>(l));
  }
  // All outputs, brought to P3 resolution and stacked.
  const auto run = [&](Tape& t, const std::map<int, Var>& in) {
    std::vector<Var> outs;
    for (const auto& [l, o] : net(t, in)) {
      outs.push_back(ag::upsample(t, o, std::size_t{1} << (l - 3)));
    }
    return ag::concat(t, outs);
  };
  double worst = 0.0;
  for (const auto& [level, x] : c) {
    worst = std::max(worst, tape_grad_error(
                                [&, level = level](Tape& t, Var v) {
                                  std::map<int, Var> in;
                                  for (const auto& [l, tensor] : c) {
                                    in[l] = l == level ? v : t.constant(tensor);
                                  }
                                  return run(t, in);
                                },
                                x, seed + static_cast<std::uint64_t>(level), eps));
  }
  const auto all_const = [&](Tape& t) {
    std::map<int, Var> in;
    for (const auto& [l, tensor] : c) in[l] = t.constant(tensor);
    return run(t, in);
  };
  return std::max(worst, param_grad_error(store, all_const, seed, eps));
}

double msddsp_error(std::uint64_t seed, double eps) {
  msddsp::MsDdspConfig cfg;
  cfg.channels = 8;
  cfg.squeeze_ratio = 2;
  ParamStore store;
  Rng rng(seed);
  const msddsp::MsDdspBlock block = msddsp::MsDdspBlock::create(store, "m", cfg, rng);
  shift_norms(store, seed + 1);
  const Tensor x = random(Shape{1, 8, 7, 7}, seed + 2);
  const double ex = tape_grad_error([&](Tape& t, Var v) { return block(t, v); }, x, seed, eps);
  return std::max(ex, param_grad_error(store, [&](Tape& t) { return block(t, t.constant(x)); },
                                       seed, eps));
}

double run_one(std::string_view op, std::uint64_t seed, double eps) {
  if (op == "conv2d") return conv_error(make_conv(3, 4, 3, 2, 1, 1), seed, eps);
  if (op == "conv2d_dilated") return conv_error(make_conv(3, 4, 3, 1, 2, 1), seed, eps);
  if (op == "conv2d_grouped") return conv_error(make_conv(4, 6, 3, 1, 1, 2), seed, eps);
  if (op == "depthwise_separable") return depthwise_separable_error(seed, eps);
  if (op == "gap") return gap_error(seed, eps);
  if (op == "softmax_fusion") return softmax_fusion_error(seed, eps);
  if (op == "se_gate") return se_gate_error(seed, eps);
  if (op == "silu") return silu_error(seed, eps);
  if (op == "neck_fusion") return neck_fusion_error(seed, eps);
  if (op == "msddsp_forward") return msddsp_error(seed, eps);
  throw ConfigError("unknown op '" + std::string(op) + "'");
}

}  // namespace

double tape_grad_error(const GraphFn& build, const Tensor& x, std::uint64_t seed, double eps) {
  Tensor r;
  {
    Tape probe(false);
    r = projection(probe.value(build(probe, probe.input(x))).shape(), seed);
  }
  Tape tape;
  const Var xv = tape.input(x);
  tape.backward(ag::weighted_sum(tape, build(tape, xv), r));
  const Tensor analytic = tape.grad(xv);
  const Tensor numeric = finite_diff_grad(
      [&](const Tensor& probe_x) {
        Tape t(false);
        return t.value(ag::weighted_sum(t, build(t, t.input(probe_x)), r))[0];
      },
      x, eps);
  return relative_error(analytic, numeric);
}

const std::vector<std::string>& op_names() {
  static const std::vector<std::string> names{
      "conv2d",  "conv2d_dilated", "conv2d_grouped", "depthwise_separable", "gap",
      "softmax_fusion", "se_gate", "silu", "neck_fusion", "msddsp_forward"};
  return names;
}

OpReport check_op(std::string_view op, std::size_t seeds, double eps, double tolerance) {
  if (std::find(op_names().begin(), op_names().end(), op) == op_names().end()) {
    throw ConfigError("unknown op '" + std::string(op) + "'");
  }
  OpReport r{std::string(op), seeds, 0.0, tolerance};
  for (std::uint64_t s = 0; s < seeds; ++s) {
    r.max_rel_error = std::max(r.max_rel_error, run_one(op, s, eps));
  }
  return r;
}

std::vector<OpReport> check_all(std::size_t seeds, double eps, double tolerance) {
  std::vector<OpReport> out;
  for (const std::string& op : op_names()) out.push_back(check_op(op, seeds, eps, tolerance));
  return out;
}

}  // namespace finsight::oracle
