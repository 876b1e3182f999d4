#pragma once

#include <cstddef>
#include <string>

#include "tunet/nn.hpp"

namespace tunet::nn {

// Temporal feature-wise linear modulation. The feature map is max-pooled
// into `blocks` summaries, an LSTM runs over them, and a linear head turns
// each hidden state into a per-channel scale/shift for its block:
//   out[:, block b] = gamma_b * x[:, block b] + beta_b
template <typename T>
class TFiLM {
 public:
  TFiLM(std::size_t channels, std::size_t blocks);

  // LSTM gets the usual uniform init; the head starts near identity
  // (small weights, gamma bias 1, beta bias 0).
  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  std::size_t channels;
  std::size_t blocks;
  LSTM<T> lstm;
  Linear<T> head;  // C -> 2C, [gamma | beta]
};

}  // namespace tunet::nn
