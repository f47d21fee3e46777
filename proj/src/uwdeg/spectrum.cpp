// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "finsight/errors.hpp"
#include "finsight/uwdeg.hpp"

namespace finsight::uw {

namespace {

constexpr std::size_t kMaxSide = 128;

using Complex = std::complex<double>;

// In-place direct DFT of n values spaced `stride` apart.
void dft_line(std::vector<Complex>& buf, std::size_t offset, std::size_t stride,
              std::size_t n, const std::vector<Complex>& twiddle,
              std::vector<Complex>& scratch) {
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += buf[offset + j * stride] * twiddle[(k * j) % n];
    }
    scratch[k] = acc;
  }
  for (std::size_t k = 0; k < n; ++k) buf[offset + k * stride] = scratch[k];
}

}  // namespace

double RadialSpectrum::total() const {
  double s = 0.0;
  for (double e : energy) s += e;
  return s;
}

std::vector<double> RadialSpectrum::mean() const {
  std::vector<double> m(energy.size(), 0.0);
  for (std::size_t b = 0; b < energy.size(); ++b) {
    if (counts[b] != 0) m[b] = energy[b] / static_cast<double>(counts[b]);
  }
  return m;
}

double RadialSpectrum::high_band_energy() const {
  double s = 0.0;
  for (std::size_t b = high_band_start(); b < energy.size(); ++b) s += energy[b];
  return s;
}

std::string RadialSpectrum::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "bin,energy\n";
  for (std::size_t b = 0; b < energy.size(); ++b) os << b << ',' << energy[b] << '\n';
  return os.str();
}

RadialSpectrum power_spectrum(const Tensor& x) {
  const Shape s = x.shape();
  if (s.n != 1 || s.c != 1) {
    throw DimensionError("power_spectrum: expected a single-channel image, got " + s.str());
  }
  if (s.h != s.w) throw GeometryError("power_spectrum: image must be square, got " + s.str());
  if (s.h == 0 || s.h > kMaxSide) {
    throw GeometryError("power_spectrum: side must be in [1, 128], got " +
                        std::to_string(s.h));
  }
  x.require_finite("power_spectrum");
  const std::size_t n = s.h;

  std::vector<Complex> twiddle(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(n);
    twiddle[k] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<Complex> buf(n * n), scratch(n);
  for (std::size_t i = 0; i < n * n; ++i) buf[i] = x[i];
  for (std::size_t r = 0; r < n; ++r) dft_line(buf, r * n, 1, n, twiddle, scratch);
  for (std::size_t c = 0; c < n; ++c) dft_line(buf, c, n, n, twiddle, scratch);

  const std::size_t nyq = n / 2;
  RadialSpectrum out;
  out.energy.assign(nyq + 1, 0.0);
  out.counts.assign(nyq + 1, 0);
  const double norm = static_cast<double>(n) * static_cast<double>(n);
  const auto signed_freq = [n](std::size_t k) {
    return k <= n / 2 ? static_cast<double>(k)
                      : static_cast<double>(k) - static_cast<double>(n);
  };
  for (std::size_t ky = 0; ky < n; ++ky) {
    for (std::size_t kx = 0; kx < n; ++kx) {
      const double r = std::hypot(signed_freq(ky), signed_freq(kx));
      const std::size_t bin = std::min(static_cast<std::size_t>(std::lround(r)), nyq);
      out.energy[bin] += std::norm(buf[ky * n + kx]) / norm;
      ++out.counts[bin];
    }
  }
  return out;
}

Tensor extract_channel(const Tensor& img, std::size_t c, std::size_t n) {
  const Shape s = img.shape();
  if (c >= s.c || n >= s.n) {
    throw DimensionError("extract_channel: (" + std::to_string(n) + ", " +
                         std::to_string(c) + ") outside " + s.str());
  }
  Tensor out(Shape{1, 1, s.h, s.w});
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) out.at(0, 0, y, x) = img.at(n, c, y, x);
  }
  return out;
}

}  // namespace finsight::uw
