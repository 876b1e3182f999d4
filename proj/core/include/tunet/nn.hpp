#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tunet/random.hpp"
#include "tunet/tensor.hpp"

namespace tunet::nn {

using ad::Tensor;

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

template <typename T>
std::size_t count_parameters(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

inline constexpr double kDefaultLeakySlope = 0.01;

// Fills `t` with U(-bound, bound) draws.
template <typename T>
void fill_uniform(Tensor<T>& t, double bound, Rng& rng);

// Cross-correlation with stride, zero padding `pad` on both sides.
// weight (out, in, K), bias (out). Output length floor((T + 2 pad - K)/S) + 1.
template <typename T>
class Conv1d {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t pad);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  std::size_t output_length(std::size_t input_length) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t in_channels, out_channels, kernel, stride, pad;
  Tensor<T> weight;
  Tensor<T> bias;
};

// Adjoint of Conv1d with its own weights: weight (in, out, K), bias (out).
// Output length (T - 1) S - 2 pad + K.
template <typename T>
class ConvTranspose1d {
 public:
  ConvTranspose1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                  std::size_t pad);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  std::size_t output_length(std::size_t input_length) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t in_channels, out_channels, kernel, stride, pad;
  Tensor<T> weight;
  Tensor<T> bias;
};

// y = x W + b on (N, in) rows; weight stored (in, out).
template <typename T>
class Linear {
 public:
  Linear(std::size_t in_features, std::size_t out_features);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t in_features, out_features;
  Tensor<T> weight;
  Tensor<T> bias;
};

// Unidirectional LSTM, zero initial state, gate order (i, f, g, o).
// input_weight (D, 4H), hidden_weight (H, 4H), bias (4H).
template <typename T>
class LSTM {
 public:
  LSTM(std::size_t input_size, std::size_t hidden_size);

  void init(Rng& rng);
  // (N, D) -> (N, H)
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t input_size, hidden_size;
  Tensor<T> input_weight;
  Tensor<T> hidden_weight;
  Tensor<T> bias;
};

template <typename T>
class LayerNorm {
 public:
  explicit LayerNorm(std::size_t features, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t features;
  double eps;
  Tensor<T> gain;
  Tensor<T> shift;
};

// (C, T) -> (C, B): maximum over each of B contiguous windows of length T/B.
template <typename T>
Tensor<T> block_maxpool(const Tensor<T>& x, std::size_t blocks);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double negative_slope = kDefaultLeakySlope) {
  return ad::leaky_relu(x, static_cast<T>(negative_slope));
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return ad::tanh(x);
}

}  // namespace tunet::nn
