// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over the pure kernels in kernels.hpp.
//
// A Tape records every value produced during a forward pass together with
// a closure that maps the output gradient onto its parents. backward()
// replays the closures in reverse recording order, which is a valid
// topological order because parents are always recorded first.

#ifndef FINSIGHT_AUTOGRAD_HPP_
#define FINSIGHT_AUTOGRAD_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finsight/kernels.hpp"
#include "finsight/tensor.hpp"

namespace finsight {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Whether weight decay applies (conv weights only).
  bool decay = true;
};

/// Owns named parameters with stable addresses, in insertion order.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor value, bool decay);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& get(std::string_view name);

  std::size_t size() const { return params_.size(); }
  // Total number of scalar parameters.
  std::size_t count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var constant(Tensor value);
  Var input(Tensor value);
  Var param(Parameter& p);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient accumulated by the last backward(); zeros if none reached v.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Tensor& g);
  // Adds g into channels [offset, offset + g.c) of v's gradient.
  void accumulate_channels(Var v, std::size_t offset, const Tensor& g);

  // Root must be a 1x1x1x1 scalar; seeds its gradient with 1.
  void backward(Var root);
  void backward(Var root, const Tensor& seed);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn fn;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Tensor& grad_slot(Node& node);

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

namespace ag {

Var conv2d(Tape& t, Var x, const ConvSpec& spec, Var w,
           std::optional<Var> b = std::nullopt);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double s);
Var silu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
// Per-channel affine; gamma and beta are 1 x C x 1 x 1.
Var scale_shift(Tape& t, Var x, Var gamma, Var beta);
// gate is N x C x 1 x 1.
Var channel_scale(Tape& t, Var x, Var gate);
Var gap(Tape& t, Var x);
Var concat(Tape& t, const std::vector<Var>& parts);
std::vector<Var> split(Tape& t, Var x, std::size_t parts);
Var upsample(Tape& t, Var x, std::size_t factor);
// Elementwise softmax across K same-shaped inputs. Returns the K
// probability maps stacked along channels (N x K*C x H x W).
Var softmax_across(Tape& t, const std::vector<Var>& logits);
Var sum(Tape& t, Var x);
// Sum of x * weights, weights a fixed tensor of x's shape.
Var weighted_sum(Tape& t, Var x, const Tensor& weights);

}  // namespace ag

}  // namespace finsight

#endif  // FINSIGHT_AUTOGRAD_HPP_
