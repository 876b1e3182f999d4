#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance run. Written from the defining formulas, independent of core.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "tunet/nn.hpp"
#include "tunet/tfilm.hpp"

namespace tunet::oracle {

using T = ad::Tensor<double>;

// Direct summation: y[o, t] = b[o] + sum_i sum_k w[o, i, k] x[i, t S + k - pad].
inline std::vector<double> naive_conv(const T& x, const nn::Conv1d<double>& c) {
  const std::size_t cin = c.in_channels, cout = c.out_channels, K = c.kernel, S = c.stride;
  const long pad = static_cast<long>(c.pad), len = static_cast<long>(x.dim(1));
  const std::size_t out_len = c.output_length(x.dim(1));
  std::vector<double> y(cout * out_len);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = c.bias[o];
      for (std::size_t i = 0; i < cin; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
          const long src = static_cast<long>(t * S + k) - pad;
          if (src < 0 || src >= len) continue;
          acc += c.weight[(o * cin + i) * K + k] * x[i * x.dim(1) + static_cast<std::size_t>(src)];
        }
      }
      y[o * out_len + t] = acc;
    }
  }
  return y;
}

// Zero insertion between samples, (K - 1 - pad) zeros at both ends, then a
// stride-1 correlation with the flipped kernel.
inline std::vector<double> zero_stuffed_tconv(const T& x, const nn::ConvTranspose1d<double>& c) {
  const std::size_t cin = c.in_channels, cout = c.out_channels, K = c.kernel, S = c.stride, len = x.dim(1);
  const std::size_t edge = K - 1 - c.pad;
  const std::size_t stuffed = (len - 1) * S + 1 + 2 * edge;
  std::vector<double> u(cin * stuffed, 0.0);
  for (std::size_t i = 0; i < cin; ++i) {
    for (std::size_t t = 0; t < len; ++t) u[i * stuffed + edge + t * S] = x[i * len + t];
  }
  const std::size_t out_len = stuffed - K + 1;
  std::vector<double> y(cout * out_len);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = c.bias[o];
      for (std::size_t i = 0; i < cin; ++i) {
        for (std::size_t k = 0; k < K; ++k) acc += u[i * stuffed + t + k] * c.weight[(i * cout + o) * K + (K - 1 - k)];
      }
      y[o * out_len + t] = acc;
    }
  }
  return y;
}

struct NaiveLstm {
  // Gate order i, f, g, o.
  static std::vector<double> run(const T& x, const nn::LSTM<double>& l) {
    const std::size_t n = x.dim(0), d = l.input_size, h = l.hidden_size;
    std::vector<double> hid(h, 0.0), cell(h, 0.0), out;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> z(4 * h);
      for (std::size_t j = 0; j < 4 * h; ++j) {
        double acc = l.bias[j];
        for (std::size_t a = 0; a < d; ++a) acc += x[t * d + a] * l.input_weight[a * 4 * h + j];
        for (std::size_t a = 0; a < h; ++a) acc += hid[a] * l.hidden_weight[a * 4 * h + j];
        z[j] = acc;
      }
      for (std::size_t j = 0; j < h; ++j) {
        const double i = sig(z[j]), f = sig(z[h + j]), g = std::tanh(z[2 * h + j]), o = sig(z[3 * h + j]);
        cell[j] = f * cell[j] + i * g;
        hid[j] = o * std::tanh(cell[j]);
      }
      out.insert(out.end(), hid.begin(), hid.end());
    }
    return out;
  }
};

// O(N^2) reference with an optional key mask.
inline std::vector<double> loop_attention(const T& q, const T& k, const T& v,
                                   const std::function<bool(std::size_t, std::size_t)>& allowed = {}) {
  const std::size_t n = q.dim(0), nk = k.dim(0), d = q.dim(1), dv = v.dim(1);
  std::vector<double> out(n * dv, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(nk, -INFINITY);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < nk; ++j) {
      if (allowed && !allowed(i, j)) continue;
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      s[j] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (std::size_t j = 0; j < nk; ++j) {
      s[j] = std::isinf(s[j]) ? 0.0 : std::exp(s[j] - mx);
      z += s[j];
    }
    for (std::size_t j = 0; j < nk; ++j) {
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += s[j] / z * v[j * dv + c];
    }
  }
  return out;
}

inline double frob_rel(std::span<const double> a, std::span<const double> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

inline constexpr double pi = std::numbers::pi;

inline double cheb_poly(int n, double x) {
  if (std::abs(x) <= 1) return std::cos(n * std::acos(x));
  const double c = std::cosh(n * std::acosh(std::abs(x)));
  return (x < 0 && n % 2) ? -c : c;
}

inline double analytic_magnitude(int n, double ripple_db, double cutoff, double omega) {
  const double eps2 = std::pow(10.0, ripple_db / 10.0) - 1.0;
  const double ratio = std::tan(omega / 2) / std::tan(pi * cutoff / 2);
  const double t = cheb_poly(n, ratio);
  return 1.0 / std::sqrt(1.0 + eps2 * t * t);
}

// Block max -> LSTM over blocks -> per-block (gamma, beta) -> affine.
inline std::vector<double> naive_tfilm(const T& x, const nn::TFiLM<double>& f) {
  const std::size_t c = f.channels, len = x.dim(1), nb = f.blocks, bl = len / nb;
  T pooled({nb, c});
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m = -INFINITY;
      for (std::size_t t = b * bl; t < (b + 1) * bl; ++t) m = std::max(m, x[ch * len + t]);
      pooled.mutable_data()[b * c + ch] = m;
    }
  }
  const auto h = NaiveLstm::run(pooled, f.lstm);
  std::vector<double> y(c * len);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double gamma = f.head.bias[ch], beta = f.head.bias[c + ch];
      for (std::size_t a = 0; a < c; ++a) {
        gamma += h[b * c + a] * f.head.weight[a * 2 * c + ch];
        beta += h[b * c + a] * f.head.weight[a * 2 * c + c + ch];
      }
      for (std::size_t t = b * bl; t < (b + 1) * bl; ++t) y[ch * len + t] = gamma * x[ch * len + t] + beta;
    }
  }
  return y;
}

}  // namespace tunet::oracle
