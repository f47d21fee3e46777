// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/nn.hpp"

#include <cmath>

#include "finsight/errors.hpp"

namespace finsight {

void kaiming_uniform(Tensor& weights, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : weights.data()) v = rng.uniform(-bound, bound);
}

ConvLayer ConvLayer::create(ParamStore& store, const std::string& name,
                            const ConvSpec& spec, Rng& rng) {
  spec.validate();
  ConvLayer layer;
  layer.spec = spec;
  Tensor w(spec.weight_shape());
  kaiming_uniform(w, (spec.in_channels / spec.groups) * spec.kernel_h * spec.kernel_w,
                  rng);
  layer.weight = &store.add(name + ".weight", std::move(w), true);
  if (spec.has_bias) {
    layer.bias = &store.add(name + ".bias", Tensor(Shape{1, spec.out_channels, 1, 1}),
                            false);
  }
  return layer;
}

Var ConvLayer::operator()(Tape& t, Var x) const {
  const Var w = t.param(*weight);
  if (bias != nullptr) return ag::conv2d(t, x, spec, w, t.param(*bias));
  return ag::conv2d(t, x, spec, w);
}

Tensor ConvLayer::forward(const Tensor& x) const {
  std::span<const double> b;
  if (bias != nullptr) b = bias->value.data();
  return conv2d(x, spec, weight->value, b);
}

void ConvLayer::set_identity() {
  if (spec.kernel_h != spec.kernel_w || spec.kernel_h % 2 == 0 ||
      spec.in_channels != spec.out_channels) {
    throw ConfigError("set_identity: needs a square odd kernel and in == out");
  }
  Tensor& w = weight->value;
  w.fill(0.0);
  const std::size_t per_group = spec.in_channels / spec.groups;
  const std::size_t mid = spec.kernel_h / 2;
  for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
    w.at(oc, oc % per_group, mid, mid) = 1.0;
  }
  if (bias != nullptr) bias->value.fill(0.0);
}

void ConvLayer::set_zero() {
  weight->value.fill(0.0);
  if (bias != nullptr) bias->value.fill(0.0);
}

CbsBlock CbsBlock::create(ParamStore& store, const std::string& name,
                          std::size_t in, std::size_t out, std::size_t k,
                          std::size_t stride, Rng& rng) {
  ConvSpec spec = ConvSpec::same(in, out, k, 1, 1, false);
  spec.stride = stride;
  CbsBlock b;
  b.conv = ConvLayer::create(store, name + ".conv", spec, rng);
  b.gamma = &store.add(name + ".norm.gamma", Tensor(Shape{1, out, 1, 1}, 1.0), false);
  b.beta = &store.add(name + ".norm.beta", Tensor(Shape{1, out, 1, 1}), false);
  return b;
}

Var CbsBlock::operator()(Tape& t, Var x) const {
  const Var y = conv(t, x);
  const Var z = ag::scale_shift(t, y, t.param(*gamma), t.param(*beta));
  return ag::silu(t, z);
}

}  // namespace finsight
