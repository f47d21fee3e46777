// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FINSIGHT_GRADCHECK_HPP_
#define FINSIGHT_GRADCHECK_HPP_

#include <cstddef>
#include <functional>
#include <span>

#include "finsight/tensor.hpp"

namespace finsight {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient (f(x + eps e_i) - f(x - eps e_i)) / (2 eps)
/// for every element of `x`. Throws ValueError if f is ever non-finite.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps);

/// Same estimate restricted to the listed flat indices; other entries are 0.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps,
                        std::span<const std::size_t> indices);

/// Normwise relative error max|a - b| / max(max|a|, max|b|, floor).
/// Optionally restricted to `indices`.
double relative_error(const Tensor& analytic, const Tensor& numeric,
                      std::span<const std::size_t> indices = {},
                      double floor = 1e-12);

}  // namespace finsight

#endif  // FINSIGHT_GRADCHECK_HPP_
