#include "tunet/tfilm.hpp"

#include <stdexcept>

namespace tunet::nn {

namespace {
constexpr double kHeadInitBound = 1e-3;
}

template <typename T>
TFiLM<T>::TFiLM(std::size_t c, std::size_t b) : channels(c), blocks(b), lstm(c, c), head(c, 2 * c) {
  if (b == 0) throw std::invalid_argument("TFiLM: block count must be positive");
}

template <typename T>
void TFiLM<T>::init(Rng& rng) {
  lstm.init(rng);
  fill_uniform(head.weight, kHeadInitBound, rng);
  auto b = head.bias.mutable_data();
  for (std::size_t i = 0; i < channels; ++i) {
    b[i] = T(1);
    b[channels + i] = T(0);
  }
}

template <typename T>
Tensor<T> TFiLM<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(0) != channels) {
    throw std::invalid_argument("TFiLM: expected (" + std::to_string(channels) + ", T) input, got " +
                                ad::shape_str(x.shape()));
  }
  const std::size_t len = x.dim(1);
  if (len % blocks != 0) {
    throw std::invalid_argument("TFiLM: block count " + std::to_string(blocks) + " does not divide length " +
                                std::to_string(len));
  }
  const std::size_t block_len = len / blocks;
  auto pooled = ad::transpose(block_maxpool(x, blocks));  // (B, C)
  auto params = head.forward(lstm.forward(pooled));       // (B, 2C)
  auto expand = [&](const Tensor<T>& p) {
    return ad::reshape(ad::repeat_last(ad::transpose(p), block_len), {channels, len});
  };
  auto gamma = expand(ad::slice(params, 1, 0, channels));
  auto beta = expand(ad::slice(params, 1, channels, 2 * channels));
  return ad::add(ad::mul(gamma, x), beta);
}

template <typename T>
void TFiLM<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  lstm.collect(prefix + ".lstm", out);
  head.collect(prefix + ".head", out);
}

template class TFiLM<float>;
template class TFiLM<double>;

}  // namespace tunet::nn
