// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "finsight/errors.hpp"

namespace finsight {

namespace {

using Index = std::ptrdiff_t;

// Half-open range of output columns whose tap `k` lands inside [0, in).
struct TapRange {
  Index lo;
  Index hi;
};

TapRange valid_outputs(Index in, Index out, Index k, const ConvSpec& spec) {
  const Index s = static_cast<Index>(spec.stride);
  const Index off = k * static_cast<Index>(spec.dilation) -
                    static_cast<Index>(spec.padding);
  // need 0 <= o*s + off <= in-1
  Index lo = off >= 0 ? 0 : (-off + s - 1) / s;
  Index hi_incl = in - 1 - off;
  Index hi = hi_incl < 0 ? 0 : hi_incl / s + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

void check_conv_operands(const Tensor& x, const ConvSpec& spec,
                         const Tensor& weights) {
  spec.validate();
  if (x.shape().c != spec.in_channels) {
    throw DimensionError("conv2d: input has " + std::to_string(x.shape().c) +
                         " channels, spec expects " +
                         std::to_string(spec.in_channels));
  }
  if (weights.shape() != spec.weight_shape()) {
    throw DimensionError("conv2d: weights " + weights.shape().str() +
                         ", expected " + spec.weight_shape().str());
  }
}

}  // namespace

ConvSpec ConvSpec::same(std::size_t in, std::size_t out, std::size_t k,
                        std::size_t dilation, std::size_t groups, bool bias) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = k;
  s.kernel_w = k;
  s.dilation = dilation;
  s.padding = dilation * (k - 1) / 2;
  s.groups = groups;
  s.has_bias = bias;
  return s;
}

ConvSpec ConvSpec::pointwise(std::size_t in, std::size_t out, bool bias) {
  return same(in, out, 1, 1, 1, bias);
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 ||
      kernel_w == 0 || stride == 0 || dilation == 0 || groups == 0) {
    throw ConfigError("conv spec fields must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw DivisibilityError("conv spec: channels " +
                            std::to_string(in_channels) + "->" +
                            std::to_string(out_channels) +
                            " not divisible by groups " +
                            std::to_string(groups));
  }
}

std::size_t ConvSpec::out_extent(std::size_t in, std::size_t k) const {
  const Index span = static_cast<Index>(dilation * (k - 1) + 1);
  const Index padded = static_cast<Index>(in + 2 * padding);
  if (padded < span) {
    throw GeometryError("conv2d: dilated kernel extent " +
                        std::to_string(span) + " exceeds padded input " +
                        std::to_string(padded));
  }
  return static_cast<std::size_t>((padded - span) /
                                  static_cast<Index>(stride)) + 1;
}

Shape ConvSpec::output_shape(const Shape& in) const {
  return Shape{in.n, out_channels, out_extent(in.h, kernel_h),
               out_extent(in.w, kernel_w)};
}

Shape ConvSpec::weight_shape() const {
  return Shape{out_channels, in_channels / groups, kernel_h, kernel_w};
}

std::size_t ConvSpec::param_count() const {
  return weight_shape().numel() + (has_bias ? out_channels : 0);
}

std::uint64_t ConvSpec::macs(std::size_t out_h, std::size_t out_w) const {
  return static_cast<std::uint64_t>(out_h) * out_w * out_channels *
         (in_channels / groups) * kernel_h * kernel_w;
}

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weights,
              std::span<const double> bias) {
  check_conv_operands(x, spec, weights);
  if (spec.has_bias ? bias.size() != spec.out_channels : !bias.empty()) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) +
                         " does not match spec");
  }
  const Shape in = x.shape();
  const Shape os = spec.output_shape(in);
  Tensor out(os);
  const std::size_t icg = spec.in_channels / spec.groups;
  const std::size_t ocg = spec.out_channels / spec.groups;
  const Index ih = static_cast<Index>(in.h), iw = static_cast<Index>(in.w);
  const Index oh = static_cast<Index>(os.h), ow = static_cast<Index>(os.w);
  const Index s = static_cast<Index>(spec.stride);
  const Index d = static_cast<Index>(spec.dilation);
  const Index p = static_cast<Index>(spec.padding);

  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
      double* dst = out.plane(n, oc);
      const double b0 = spec.has_bias ? bias[oc] : 0.0;
      std::fill(dst, dst + os.plane(), b0);
      const std::size_t g = oc / ocg;
      for (std::size_t ci = 0; ci < icg; ++ci) {
        const double* src = x.plane(n, g * icg + ci);
        for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
          const TapRange rows = valid_outputs(ih, oh, static_cast<Index>(ky), spec);
          for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
            const TapRange cols =
                valid_outputs(iw, ow, static_cast<Index>(kx), spec);
            const double wv = weights.at(oc, ci, ky, kx);
            const Index xoff = static_cast<Index>(kx) * d - p;
            for (Index oy = rows.lo; oy < rows.hi; ++oy) {
              const Index iy = oy * s + static_cast<Index>(ky) * d - p;
              const double* srow = src + iy * iw + xoff;
              double* drow = dst + oy * ow;
              if (s == 1) {
                for (Index ox = cols.lo; ox < cols.hi; ++ox) {
                  drow[ox] += wv * srow[ox];
                }
              } else {
                for (Index ox = cols.lo; ox < cols.hi; ++ox) {
                  drow[ox] += wv * srow[ox * s];
                }
              }
            }
          }
        }
      }
    }
  }
  out.require_finite("conv2d");
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const ConvSpec& spec,
                          const Tensor& weights, const Tensor& grad_out) {
  check_conv_operands(x, spec, weights);
  const Shape in = x.shape();
  const Shape os = spec.output_shape(in);
  if (grad_out.shape() != os) {
    throw DimensionError("conv2d_backward: grad_out " +
                         grad_out.shape().str() + ", expected " + os.str());
  }
  ConvGrads g{Tensor(in), Tensor(spec.weight_shape()),
              std::vector<double>(spec.has_bias ? spec.out_channels : 0, 0.0)};
  const std::size_t icg = spec.in_channels / spec.groups;
  const std::size_t ocg = spec.out_channels / spec.groups;
  const Index ih = static_cast<Index>(in.h), iw = static_cast<Index>(in.w);
  const Index oh = static_cast<Index>(os.h), ow = static_cast<Index>(os.w);
  const Index s = static_cast<Index>(spec.stride);
  const Index d = static_cast<Index>(spec.dilation);
  const Index p = static_cast<Index>(spec.padding);

  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
      const double* go = grad_out.plane(n, oc);
      if (spec.has_bias) {
        double acc = 0.0;
        for (std::size_t i = 0; i < os.plane(); ++i) acc += go[i];
        g.grad_b[oc] += acc;
      }
      const std::size_t grp = oc / ocg;
      for (std::size_t ci = 0; ci < icg; ++ci) {
        const double* src = x.plane(n, grp * icg + ci);
        double* gsrc = g.grad_x.plane(n, grp * icg + ci);
        for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
          const TapRange rows = valid_outputs(ih, oh, static_cast<Index>(ky), spec);
          for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
            const TapRange cols =
                valid_outputs(iw, ow, static_cast<Index>(kx), spec);
            const double wv = weights.at(oc, ci, ky, kx);
            const Index xoff = static_cast<Index>(kx) * d - p;
            double wacc = 0.0;
            for (Index oy = rows.lo; oy < rows.hi; ++oy) {
              const Index iy = oy * s + static_cast<Index>(ky) * d - p;
              const double* srow = src + iy * iw + xoff;
              double* gsrow = gsrc + iy * iw + xoff;
              const double* grow = go + oy * ow;
              for (Index ox = cols.lo; ox < cols.hi; ++ox) {
                wacc += grow[ox] * srow[ox * s];
                gsrow[ox * s] += wv * grow[ox];
              }
            }
            g.grad_w.at(oc, ci, ky, kx) += wacc;
          }
        }
      }
    }
  }
  g.grad_x.require_finite("conv2d_backward");
  g.grad_w.require_finite("conv2d_backward");
  return g;
}

ConvSpec SeparableSpec::depthwise() const {
  return ConvSpec::same(channels, channels, kernel, dilation, channels,
                        has_bias);
}

ConvSpec SeparableSpec::pointwise() const {
  return ConvSpec::pointwise(channels, out_channels, has_bias);
}

std::size_t SeparableSpec::param_count() const {
  return depthwise().param_count() + pointwise().param_count();
}

Tensor depthwise_separable(const Tensor& x, const SeparableSpec& spec,
                           const Tensor& dw_weights,
                           std::span<const double> dw_bias,
                           const Tensor& pw_weights,
                           std::span<const double> pw_bias) {
  const Tensor mid = conv2d(x, spec.depthwise(), dw_weights, dw_bias);
  return conv2d(mid, spec.pointwise(), pw_weights, pw_bias);
}

Tensor gap(const Tensor& x) {
  const Shape s = x.shape();
  if (s.plane() == 0) throw GeometryError("gap: empty spatial extent");
  Tensor out(Shape{s.n, s.c, 1, 1});
  const double count = static_cast<double>(s.plane());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      // Mean about the first element: exact for constant planes.
      const double* p = x.plane(n, c);
      const double pivot = p[0];
      double acc = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i] - pivot;
      out.at(n, c, 0, 0) = pivot + acc / count;
    }
  }
  out.require_finite("gap");
  return out;
}

Tensor gap_backward(const Shape& input_shape, const Tensor& grad_out) {
  if (grad_out.shape() != Shape{input_shape.n, input_shape.c, 1, 1}) {
    throw DimensionError("gap_backward: grad_out " + grad_out.shape().str());
  }
  if (input_shape.plane() == 0) throw GeometryError("gap: empty spatial extent");
  Tensor g(input_shape);
  const double inv = 1.0 / static_cast<double>(input_shape.plane());
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t c = 0; c < input_shape.c; ++c) {
      double* p = g.plane(n, c);
      std::fill(p, p + input_shape.plane(), grad_out.at(n, c, 0, 0) * inv);
    }
  }
  return g;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ValueError("softmax: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) throw ValueError("softmax: non-finite input");
    m = std::max(m, x);
  }
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    z += out[i];
  }
  for (double& o : out) o /= z;
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts) {
  const Shape s = x.shape();
  if (parts == 0 || s.c % parts != 0) {
    throw DivisibilityError("split_channels: " + std::to_string(s.c) +
                            " channels not divisible into " +
                            std::to_string(parts) + " parts");
  }
  const std::size_t cc = s.c / parts;
  std::vector<Tensor> out;
  out.reserve(parts);
  for (std::size_t k = 0; k < parts; ++k) {
    Tensor t(Shape{s.n, cc, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n) {
      const double* src = x.plane(n, k * cc);
      std::copy(src, src + cc * s.plane(), t.plane(n, 0));
    }
    out.push_back(std::move(t));
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape s0 = parts[0].shape();
  std::size_t c = 0;
  for (const Tensor& t : parts) {
    const Shape s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw DimensionError("concat_channels: " + s.str() + " vs " + s0.str());
    }
    c += s.c;
  }
  Tensor out(Shape{s0.n, c, s0.h, s0.w});
  for (std::size_t n = 0; n < s0.n; ++n) {
    std::size_t off = 0;
    for (const Tensor& t : parts) {
      const std::size_t len = t.shape().c * s0.plane();
      if (len > 0) std::copy(t.plane(n, 0), t.plane(n, 0) + len, out.plane(n, off));
      off += t.shape().c;
    }
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  if (factor == 0) throw ConfigError("upsample_nearest: factor must be >= 1");
  const Shape s = x.shape();
  Tensor out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  const std::size_t ow = s.w * factor;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t y = 0; y < s.h * factor; ++y) {
        const double* srow = src + (y / factor) * s.w;
        for (std::size_t xx = 0; xx < ow; ++xx) dst[y * ow + xx] = srow[xx / factor];
      }
    }
  }
  return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_out, std::size_t factor) {
  if (factor == 0) throw ConfigError("upsample_nearest: factor must be >= 1");
  const Shape s = grad_out.shape();
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw DimensionError("upsample_nearest_backward: " + s.str() +
                         " not a multiple of factor");
  }
  Tensor g(Shape{s.n, s.c, s.h / factor, s.w / factor});
  const std::size_t gw = s.w / factor;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* src = grad_out.plane(n, c);
      double* dst = g.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t xx = 0; xx < s.w; ++xx) {
          dst[(y / factor) * gw + xx / factor] += src[y * s.w + xx];
        }
      }
    }
  }
  return g;
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = sigmoid(x[i]);
  out.require_finite("sigmoid");
  return out;
}

Tensor silu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * sigmoid(x[i]);
  out.require_finite("silu");
  return out;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_out) {
  if (x.shape() != grad_out.shape()) {
    throw DimensionError("silu_backward: " + x.shape().str() + " vs " +
                         grad_out.shape().str());
  }
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double sg = sigmoid(x[i]);
    g[i] = grad_out[i] * sg * (1.0 + x[i] * (1.0 - sg));
  }
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out += b;
  out.require_finite("add");
  return out;
}

Tensor scale_shift(const Tensor& x, std::span<const double> scale,
                   std::span<const double> shift) {
  const Shape s = x.shape();
  if (scale.size() != s.c || shift.size() != s.c) {
    throw DimensionError("scale_shift: parameter length vs " +
                         std::to_string(s.c) + " channels");
  }
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] * scale[c] + shift[c];
    }
  }
  out.require_finite("scale_shift");
  return out;
}

Tensor channel_scale(const Tensor& x, const Tensor& gate) {
  const Shape s = x.shape();
  if (gate.shape() != Shape{s.n, s.c, 1, 1}) {
    throw DimensionError("channel_scale: gate " + gate.shape().str() +
                         " for input " + s.str());
  }
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double gv = gate.at(n, c, 0, 0);
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] * gv;
    }
  }
  out.require_finite("channel_scale");
  return out;
}

ChannelScaleGrads channel_scale_backward(const Tensor& x, const Tensor& gate,
                                         const Tensor& grad_out) {
  const Shape s = x.shape();
  if (grad_out.shape() != s || gate.shape() != Shape{s.n, s.c, 1, 1}) {
    throw DimensionError("channel_scale_backward: operand shapes disagree");
  }
  ChannelScaleGrads g{Tensor(s), Tensor(gate.shape())};
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double gv = gate.at(n, c, 0, 0);
      const double* src = x.plane(n, c);
      const double* go = grad_out.plane(n, c);
      double* gx = g.grad_x.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) {
        gx[i] = go[i] * gv;
        acc += go[i] * src[i];
      }
      g.grad_gate.at(n, c, 0, 0) = acc;
    }
  }
  return g;
}

}  // namespace finsight
