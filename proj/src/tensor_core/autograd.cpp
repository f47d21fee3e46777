// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "finsight/errors.hpp"

namespace finsight {

Parameter& ParamStore::add(std::string name, Tensor value, bool decay) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter " + name);
  Tensor grad(value.shape());
  params_.push_back(Parameter{std::move(name), std::move(value),
                              std::move(grad), decay});
  return params_.back();
}

Parameter* ParamStore::find(std::string_view name) {
  for (Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParamStore::find(std::string_view name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter& ParamStore::get(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ConfigError("unknown parameter " + std::string(name));
  return *p;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (Parameter& p : params_) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    p.grad.fill(0.0);
  }
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, grad_enabled_});
  return Var{nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, grad_enabled_});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, const std::vector<Var>& parents,
                 BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (Var p : parents) needs = needs || nodes_.at(p.id).requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr,
           needs});
  return Var{nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad.empty() && n.value.numel() > 0 ? Tensor(n.value.shape())
                                               : n.grad;
}

Tensor& Tape::grad_slot(Node& node) {
  if (node.grad.shape() != node.value.shape()) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw DimensionError("gradient " + g.shape().str() + " for value " +
                         n.value.shape().str());
  }
  if (n.grad.shape() != n.value.shape()) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate_channels(Var v, std::size_t offset, const Tensor& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  const Shape vs = n.value.shape();
  const Shape gs = g.shape();
  if (gs.n != vs.n || gs.h != vs.h || gs.w != vs.w || offset + gs.c > vs.c) {
    throw DimensionError("channel gradient " + gs.str() + " at offset " +
                         std::to_string(offset) + " for " + vs.str());
  }
  Tensor& dst = grad_slot(n);
  const std::size_t len = gs.c * gs.plane();
  for (std::size_t b = 0; b < gs.n; ++b) {
    double* d = dst.plane(b, offset);
    const double* s = g.plane(b, 0);
    for (std::size_t i = 0; i < len; ++i) d[i] += s[i];
  }
}

void Tape::backward(Var root) {
  if (nodes_.at(root.id).value.shape() != Shape{1, 1, 1, 1}) {
    throw DimensionError("backward: root must be a scalar, got " +
                         nodes_.at(root.id).value.shape().str());
  }
  backward(root, Tensor::scalar(1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  for (Node& n : nodes_) n.grad = Tensor();
  accumulate(root, seed);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.requires_grad) continue;
    n.grad.require_finite("backward");
    if (n.fn) {
      // The closure may append to other nodes' gradients but never to
      // nodes_ itself, so holding a copy of the gradient is safe.
      const Tensor g = n.grad;
      n.fn(*this, g);
    }
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      p.grad += n.grad;
    }
  }
}

namespace ag {

Var conv2d(Tape& t, Var x, const ConvSpec& spec, Var w, std::optional<Var> b) {
  std::span<const double> bias;
  if (b) bias = t.value(*b).data();
  Tensor y = finsight::conv2d(t.value(x), spec, t.value(w), bias);
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(*b);
  return t.record(std::move(y), parents,
                  [x, w, b, spec](Tape& tp, const Tensor& g) {
                    ConvGrads cg = conv2d_backward(tp.value(x), spec,
                                                   tp.value(w), g);
                    tp.accumulate(x, cg.grad_x);
                    tp.accumulate(w, cg.grad_w);
                    if (b) {
                      tp.accumulate(*b, Tensor(tp.value(*b).shape(),
                                               std::move(cg.grad_b)));
                    }
                  });
}

Var add(Tape& t, Var a, Var b) {
  Tensor y = finsight::add(t.value(a), t.value(b));
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var scale(Tape& t, Var x, double s) {
  Tensor y = t.value(x);
  y *= s;
  y.require_finite("scale");
  return t.record(std::move(y), {x}, [x, s](Tape& tp, const Tensor& g) {
    Tensor gx = g;
    gx *= s;
    tp.accumulate(x, gx);
  });
}

Var silu(Tape& t, Var x) {
  return t.record(finsight::silu(t.value(x)), {x},
                  [x](Tape& tp, const Tensor& g) {
                    tp.accumulate(x, silu_backward(tp.value(x), g));
                  });
}

Var sigmoid(Tape& t, Var x) {
  Tensor y = finsight::sigmoid(t.value(x));
  Tensor out = y;
  return t.record(std::move(out), {x}, [x, y](Tape& tp, const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * y[i] * (1.0 - y[i]);
    tp.accumulate(x, gx);
  });
}

Var scale_shift(Tape& t, Var x, Var gamma, Var beta) {
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  Tensor y = finsight::scale_shift(t.value(x), gv.data(), bv.data());
  return t.record(
      std::move(y), {x, gamma, beta}, [x, gamma, beta](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value(x);
        const Tensor& gm = tp.value(gamma);
        const Shape s = xv.shape();
        Tensor gx(s), gg(gm.shape()), gb(gm.shape());
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t c = 0; c < s.c; ++c) {
            const double* go = g.plane(n, c);
            const double* xp = xv.plane(n, c);
            double* gxp = gx.plane(n, c);
            double ag = 0.0, ab = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i) {
              gxp[i] = go[i] * gm[c];
              ag += go[i] * xp[i];
              ab += go[i];
            }
            gg[c] += ag;
            gb[c] += ab;
          }
        }
        tp.accumulate(x, gx);
        tp.accumulate(gamma, gg);
        tp.accumulate(beta, gb);
      });
}

Var channel_scale(Tape& t, Var x, Var gate) {
  Tensor y = finsight::channel_scale(t.value(x), t.value(gate));
  return t.record(std::move(y), {x, gate}, [x, gate](Tape& tp, const Tensor& g) {
    ChannelScaleGrads cg = channel_scale_backward(tp.value(x), tp.value(gate), g);
    tp.accumulate(x, cg.grad_x);
    tp.accumulate(gate, cg.grad_gate);
  });
}

Var gap(Tape& t, Var x) {
  return t.record(finsight::gap(t.value(x)), {x},
                  [x](Tape& tp, const Tensor& g) {
                    tp.accumulate(x, gap_backward(tp.value(x).shape(), g));
                  });
}

Var concat(Tape& t, const std::vector<Var>& parts) {
  std::vector<Tensor> vals;
  vals.reserve(parts.size());
  for (Var p : parts) vals.push_back(t.value(p));
  Tensor y = concat_channels(vals);
  return t.record(std::move(y), parts, [parts](Tape& tp, const Tensor& g) {
    const Shape gs = g.shape();
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t c = tp.value(p).shape().c;
      if (tp.requires_grad(p)) {
        Tensor gp(Shape{gs.n, c, gs.h, gs.w});
        for (std::size_t n = 0; n < gs.n; ++n) {
          std::copy(g.plane(n, off), g.plane(n, off) + c * gs.plane(),
                    gp.plane(n, 0));
        }
        tp.accumulate(p, gp);
      }
      off += c;
    }
  });
}

std::vector<Var> split(Tape& t, Var x, std::size_t parts) {
  std::vector<Tensor> blocks = split_channels(t.value(x), parts);
  std::vector<Var> out;
  out.reserve(parts);
  std::size_t off = 0;
  for (Tensor& b : blocks) {
    const std::size_t c = b.shape().c;
    out.push_back(t.record(std::move(b), {x}, [x, off](Tape& tp, const Tensor& g) {
      tp.accumulate_channels(x, off, g);
    }));
    off += c;
  }
  return out;
}

Var upsample(Tape& t, Var x, std::size_t factor) {
  return t.record(upsample_nearest(t.value(x), factor), {x},
                  [x, factor](Tape& tp, const Tensor& g) {
                    tp.accumulate(x, upsample_nearest_backward(g, factor));
                  });
}

Var softmax_across(Tape& t, const std::vector<Var>& logits) {
  if (logits.empty()) throw DimensionError("softmax_across: no inputs");
  const Shape s = t.value(logits[0]).shape();
  for (Var v : logits) {
    if (t.value(v).shape() != s) {
      throw DimensionError("softmax_across: " + t.value(v).shape().str() +
                           " vs " + s.str());
    }
  }
  const std::size_t k = logits.size();
  const std::size_t per = s.c * s.plane();
  Tensor y(Shape{s.n, k * s.c, s.h, s.w});
  std::vector<double> column(k);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        column[j] = t.value(logits[j]).plane(n, 0)[i];
      }
      const std::vector<double> p = softmax(column);
      for (std::size_t j = 0; j < k; ++j) y.plane(n, j * s.c)[i] = p[j];
    }
  }
  Tensor probs = y;
  return t.record(std::move(y), logits,
                  [logits, probs, s, k, per](Tape& tp, const Tensor& g) {
                    std::vector<Tensor> gl(k, Tensor(s));
                    for (std::size_t n = 0; n < s.n; ++n) {
                      for (std::size_t i = 0; i < per; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < k; ++j) {
                          dot += probs.plane(n, j * s.c)[i] * g.plane(n, j * s.c)[i];
                        }
                        for (std::size_t j = 0; j < k; ++j) {
                          const double pj = probs.plane(n, j * s.c)[i];
                          gl[j].plane(n, 0)[i] = pj * (g.plane(n, j * s.c)[i] - dot);
                        }
                      }
                    }
                    for (std::size_t j = 0; j < k; ++j) tp.accumulate(logits[j], gl[j]);
                  });
}

Var sum(Tape& t, Var x) {
  const Shape s = t.value(x).shape();
  return t.record(Tensor::scalar(t.value(x).sum()), {x},
                  [x, s](Tape& tp, const Tensor& g) {
                    tp.accumulate(x, Tensor(s, g[0]));
                  });
}

Var weighted_sum(Tape& t, Var x, const Tensor& weights) {
  const Tensor& xv = t.value(x);
  if (weights.shape() != xv.shape()) {
    throw DimensionError("weighted_sum: weights " + weights.shape().str() +
                         " for " + xv.shape().str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i] * weights[i];
  return t.record(Tensor::scalar(acc), {x}, [x, weights](Tape& tp, const Tensor& g) {
    Tensor gx = weights;
    gx *= g[0];
    tp.accumulate(x, gx);
  });
}

}  // namespace ag

}  // namespace finsight
