#include "tunet/dsp/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tunet::dsp {

const std::vector<double>& halfband_interpolator() {
  static const std::vector<double> taps = [] {
    const std::size_t n = 2 * kSincHalfTaps + 1;
    const double i0_beta = std::cyl_bessel_i(0.0, kSincKaiserBeta);
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double m = static_cast<double>(i) - static_cast<double>(kSincHalfTaps);
      const double r = m / static_cast<double>(kSincHalfTaps);
      const double window = std::cyl_bessel_i(0.0, kSincKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      const double arg = std::numbers::pi * m / 2.0;
      const double sinc = m == 0.0 ? 1.0 : std::sin(arg) / arg;
      h[i] = sinc * window;
    }
    return h;
  }();
  return taps;
}

namespace {
// Centred (zero-delay) FIR with zero extension at both ends.
std::vector<double> centred_fir(std::span<const double> x, const std::vector<double>& h, double gain) {
  const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    for (std::ptrdiff_t j = lo; j <= hi; ++j) acc += h[static_cast<std::size_t>(i - j + half)] * x[j];
    y[static_cast<std::size_t>(i)] = gain * acc;
  }
  return y;
}

std::vector<double> even_length(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  if (v.size() % 2) v.push_back(0.0);
  return v;
}
}  // namespace

std::vector<double> downsample2(std::span<const double> x16k, const FilterSpec& spec) {
  const auto filtered = sos_filter(even_length(x16k), spec);
  std::vector<double> out(filtered.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = filtered[2 * i];
  return out;
}

std::vector<double> upsample2(std::span<const double> x8k) {
  const auto& h = halfband_interpolator();
  const auto n = static_cast<std::ptrdiff_t>(x8k.size());
  const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
  std::vector<double> out(2 * x8k.size(), 0.0);
  // Only even positions of the stuffed signal are non-zero, so sample `i`
  // draws on input samples j with (i - 2j + half) inside the tap range.
  for (std::ptrdiff_t i = 0; i < 2 * n; ++i) {
    if (i % 2 == 0) {
      out[static_cast<std::size_t>(i)] = x8k[static_cast<std::size_t>(i / 2)];
      continue;
    }
    double acc = 0.0;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, (i - half + 1) / 2);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, (i + half) / 2);
    for (std::ptrdiff_t j = lo; j <= hi; ++j) acc += h[static_cast<std::size_t>(i - 2 * j + half)] * x8k[j];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

std::vector<double> sinc_downsample2(std::span<const double> x16k) {
  const auto filtered = centred_fir(even_length(x16k), halfband_interpolator(), 0.5);
  std::vector<double> out(filtered.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = filtered[2 * i];
  return out;
}

}  // namespace tunet::dsp
