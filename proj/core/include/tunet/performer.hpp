#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tunet/nn.hpp"

namespace tunet::performer {

using ad::Tensor;

struct PerformerConfig {
  std::size_t layers = 3;
  std::size_t heads = 2;
  std::size_t head_dim = 32;
  std::size_t model_dim = 256;
  std::size_t ff_mult = 4;
  // Heads [heads - local_heads, heads) use windowed exact attention; the rest FAVOR+.
  std::size_t local_heads = 1;
  std::size_t random_features = 110;
  // 0 selects sequence length / 8 at run time.
  std::size_t local_window = 0;
  double leaky_slope = nn::kDefaultLeakySlope;

  void validate() const;
  std::size_t inner_dim() const { return heads * head_dim; }
};

struct FavorDiagnostics {
  std::size_t calls = 0;
  std::size_t stabilized = 0;  // calls whose normalizer dipped below 1e-9
};

// softmax(Q K^T / sqrt(d)) V with row-max subtraction.
template <typename T>
Tensor<T> exact_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

// Exact attention restricted to `window` keys per query: the window is
// centred on the query and shifted inward at the sequence ends, so every
// query sees exactly min(window, N) keys.
template <typename T>
Tensor<T> local_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t window);

// Half-open key range [first, last) that query `i` may attend to.
std::pair<std::size_t, std::size_t> local_window_range(std::size_t i, std::size_t n, std::size_t window);

// Positive orthogonal random features (FAVOR+):
//   phi(x) = exp(W x' - |x'|^2 / 2) / sqrt(m),  x' = x / d^(1/4)
//   out = phi(Q) (phi(K)^T V) / (phi(Q) (phi(K)^T 1))
// `features` is (m, d). Per-query and global key maxima are subtracted
// inside the exponent; both cancel in the ratio.
template <typename T>
Tensor<T> favor_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                          const Tensor<T>& features, FavorDiagnostics* diagnostics = nullptr);

// (m, d) matrix whose rows are orthogonal within each d-row block, with
// lengths drawn from chi(d) (norms of independent Gaussian vectors).
template <typename T>
Tensor<T> orthogonal_random_features(std::size_t m, std::size_t d, Rng& rng);

template <typename T>
class PerformerBlock {
 public:
  explicit PerformerBlock(const PerformerConfig& config);

  void init(Rng& rng);
  void redraw_features(Rng& rng);
  // Pre-norm residual block on (N, model_dim).
  Tensor<T> forward(const Tensor<T>& x, FavorDiagnostics* diagnostics = nullptr) const;
  Tensor<T> attention(const Tensor<T>& x, FavorDiagnostics* diagnostics = nullptr) const;
  void collect(const std::string& prefix, nn::ParameterList<T>& out) const;
  void collect_buffers(const std::string& prefix, nn::ParameterList<T>& out) const;

  PerformerConfig config;
  nn::LayerNorm<T> attn_norm;
  nn::Linear<T> to_q, to_k, to_v, to_out;
  nn::LayerNorm<T> ff_norm;
  nn::Linear<T> ff_in, ff_out;
  Tensor<T> features;  // frozen buffer, not a trainable parameter
};

template <typename T>
class PerformerStack {
 public:
  explicit PerformerStack(const PerformerConfig& config);

  void init(Rng& rng);
  void redraw_features(std::uint64_t seed);
  Tensor<T> forward(const Tensor<T>& x, FavorDiagnostics* diagnostics = nullptr) const;
  void collect(const std::string& prefix, nn::ParameterList<T>& out) const;
  void collect_buffers(const std::string& prefix, nn::ParameterList<T>& out) const;

  PerformerConfig config;
  std::vector<PerformerBlock<T>> blocks;
};

}  // namespace tunet::performer
