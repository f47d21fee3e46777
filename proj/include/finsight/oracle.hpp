// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference oracle over every differentiable op in the library.

#ifndef FINSIGHT_ORACLE_HPP_
#define FINSIGHT_ORACLE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "finsight/autograd.hpp"

namespace finsight::oracle {

using GraphFn = std::function<Var(Tape&, Var)>;

// Relative error between the tape gradient of sum(r * build(x)) and its
// central differences, r a random projection drawn from `seed`.
double tape_grad_error(const GraphFn& build, const Tensor& x, std::uint64_t seed,
                       double eps = 1e-5);

struct OpReport {
  std::string op;
  std::size_t seeds = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

// conv2d, conv2d_dilated, conv2d_grouped, depthwise_separable, gap,
// softmax_fusion, se_gate, silu, neck_fusion, msddsp_forward.
const std::vector<std::string>& op_names();

// Worst error over seeds 0..seeds-1. ConfigError for an unknown op.
OpReport check_op(std::string_view op, std::size_t seeds = 20, double eps = 1e-5,
                  double tolerance = 1e-4);
std::vector<OpReport> check_all(std::size_t seeds = 20, double eps = 1e-5,
                                double tolerance = 1e-4);

}  // namespace finsight::oracle

#endif  // FINSIGHT_ORACLE_HPP_
