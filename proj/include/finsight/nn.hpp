// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FINSIGHT_NN_HPP_
#define FINSIGHT_NN_HPP_

#include <cstddef>
#include <string>

#include "finsight/autograd.hpp"
#include "finsight/kernels.hpp"
#include "finsight/rng.hpp"

namespace finsight {

// Kaiming-uniform fan-in initialization, bound sqrt(6 / fan_in).
void kaiming_uniform(Tensor& weights, std::size_t fan_in, Rng& rng);

/// A convolution whose weight and bias live in a ParamStore.
struct ConvLayer {
  ConvSpec spec;
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static ConvLayer create(ParamStore& store, const std::string& name,
                          const ConvSpec& spec, Rng& rng);

  Var operator()(Tape& t, Var x) const;
  Tensor forward(const Tensor& x) const;
  std::size_t param_count() const { return spec.param_count(); }

  // Center tap 1 on each channel's own input, zero elsewhere; zero bias.
  // Requires a square odd kernel and in == out channels.
  void set_identity();
  void set_zero();
};

/// Conv (no bias) -> per-channel scale/shift -> SiLU.
///
/// The normalization uses running statistics frozen at mean 0 and
/// variance 1, so it reduces to a learned affine map.
struct CbsBlock {
  ConvLayer conv;
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static CbsBlock create(ParamStore& store, const std::string& name,
                         std::size_t in, std::size_t out, std::size_t k,
                         std::size_t stride, Rng& rng);

  Var operator()(Tape& t, Var x) const;
  std::size_t param_count() const { return conv.param_count() + 2 * conv.spec.out_channels; }
};

}  // namespace finsight

#endif  // FINSIGHT_NN_HPP_
