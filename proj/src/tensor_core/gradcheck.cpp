// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "finsight/errors.hpp"

namespace finsight {

namespace {

double probe(const ScalarFn& f, const Tensor& x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw ValueError("finite_diff_grad: f is non-finite");
  return v;
}

}  // namespace

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps,
                        std::span<const std::size_t> indices) {
  if (!(eps > 0.0)) throw ValueError("finite_diff_grad: eps must be > 0");
  Tensor g(x.shape());
  Tensor probe_x = x;
  for (std::size_t i : indices) {
    if (i >= x.numel()) throw DimensionError("finite_diff_grad: index range");
    const double orig = probe_x[i];
    probe_x[i] = orig + eps;
    const double fp = probe(f, probe_x);
    probe_x[i] = orig - eps;
    const double fm = probe(f, probe_x);
    probe_x[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps) {
  std::vector<std::size_t> all(x.numel());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return finite_diff_grad(f, x, eps, all);
}

double relative_error(const Tensor& analytic, const Tensor& numeric,
                      std::span<const std::size_t> indices, double floor) {
  if (analytic.shape() != numeric.shape()) {
    throw DimensionError("relative_error: " + analytic.shape().str() + " vs " +
                         numeric.shape().str());
  }
  double diff = 0.0, scale = floor;
  auto visit = [&](std::size_t i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  };
  if (indices.empty()) {
    for (std::size_t i = 0; i < analytic.numel(); ++i) visit(i);
  } else {
    for (std::size_t i : indices) visit(i);
  }
  return diff / scale;
}

}  // namespace finsight
