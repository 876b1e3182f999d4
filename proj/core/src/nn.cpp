#include "tunet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tunet::nn {

template <typename T>
void fill_uniform(Tensor<T>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
}

namespace {
template <typename T>
Tensor<T> make_param(ad::Shape shape) {
  Tensor<T> t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& y, const Tensor<T>& bias) {
  return ad::add(y, ad::repeat_last(bias, y.dim(1)));
}
}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Conv1d<T>::Conv1d(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p)
    : in_channels(in), out_channels(out), kernel(k), stride(s), pad(p),
      weight(make_param<T>({out, in, k})), bias(make_param<T>({out})) {
  if (in == 0 || out == 0 || k == 0 || s == 0) {
    throw std::invalid_argument("Conv1d: channels, kernel and stride must be positive");
  }
}

template <typename T>
void Conv1d<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel));
  fill_uniform(weight, bound, rng);
  fill_uniform(bias, bound, rng);
}

template <typename T>
std::size_t Conv1d<T>::output_length(std::size_t len) const {
  if (len + 2 * pad < kernel) {
    throw std::invalid_argument("Conv1d: input length " + std::to_string(len) + " below minimum " +
                                std::to_string(kernel - 2 * pad));
  }
  return (len + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Tensor<T> Conv1d<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(0) != in_channels) {
    throw std::invalid_argument("Conv1d: expected (" + std::to_string(in_channels) + ", T) input, got " +
                                ad::shape_str(x.shape()));
  }
  output_length(x.dim(1));
  auto cols = ad::unfold1d(x, kernel, stride, pad);
  auto w = ad::reshape(weight, {out_channels, in_channels * kernel});
  return add_channel_bias(ad::matmul(w, cols), bias);
}

template <typename T>
void Conv1d<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// ---------------------------------------------------------------------------

template <typename T>
ConvTranspose1d<T>::ConvTranspose1d(std::size_t in, std::size_t out, std::size_t k, std::size_t s,
                                    std::size_t p)
    : in_channels(in), out_channels(out), kernel(k), stride(s), pad(p),
      weight(make_param<T>({in, out, k})), bias(make_param<T>({out})) {
  if (in == 0 || out == 0 || k == 0 || s == 0) {
    throw std::invalid_argument("ConvTranspose1d: channels, kernel and stride must be positive");
  }
}

template <typename T>
void ConvTranspose1d<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel));
  fill_uniform(weight, bound, rng);
  fill_uniform(bias, bound, rng);
}

template <typename T>
std::size_t ConvTranspose1d<T>::output_length(std::size_t len) const {
  if (len == 0) throw std::invalid_argument("ConvTranspose1d: empty input");
  const std::size_t full = (len - 1) * stride + kernel;
  if (full < 2 * pad) throw std::invalid_argument("ConvTranspose1d: padding exceeds output length");
  return full - 2 * pad;
}

template <typename T>
Tensor<T> ConvTranspose1d<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(0) != in_channels) {
    throw std::invalid_argument("ConvTranspose1d: expected (" + std::to_string(in_channels) +
                                ", T) input, got " + ad::shape_str(x.shape()));
  }
  const std::size_t out_len = output_length(x.dim(1));
  auto w = ad::transpose(ad::reshape(weight, {in_channels, out_channels * kernel}));
  auto cols = ad::matmul(w, x);
  return add_channel_bias(ad::fold1d(cols, kernel, stride, pad, out_len), bias);
}

template <typename T>
void ConvTranspose1d<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// ---------------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out)
    : in_features(in), out_features(out), weight(make_param<T>({in, out})), bias(make_param<T>({out})) {}

template <typename T>
void Linear<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  fill_uniform(weight, bound, rng);
  fill_uniform(bias, bound, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  return ad::add(ad::matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// ---------------------------------------------------------------------------

template <typename T>
LSTM<T>::LSTM(std::size_t d, std::size_t h)
    : input_size(d), hidden_size(h), input_weight(make_param<T>({d, 4 * h})),
      hidden_weight(make_param<T>({h, 4 * h})), bias(make_param<T>({4 * h})) {}

template <typename T>
void LSTM<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  fill_uniform(input_weight, bound, rng);
  fill_uniform(hidden_weight, bound, rng);
  fill_uniform(bias, bound, rng);
}

template <typename T>
Tensor<T> LSTM<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(1) != input_size) {
    throw std::invalid_argument("LSTM: expected (N, " + std::to_string(input_size) + ") input, got " +
                                ad::shape_str(x.shape()));
  }
  const std::size_t steps = x.dim(0), h = hidden_size;
  const auto projected = ad::add(ad::matmul(x, input_weight), bias);  // (N, 4H)
  Tensor<T> hidden;
  Tensor<T> cell;
  std::vector<Tensor<T>> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    auto z = ad::slice(projected, 0, t, t + 1);
    if (hidden.defined()) z = ad::add(z, ad::matmul(hidden, hidden_weight));
    auto i = ad::sigmoid(ad::slice(z, 1, 0, h));
    auto f = ad::sigmoid(ad::slice(z, 1, h, 2 * h));
    auto g = ad::tanh(ad::slice(z, 1, 2 * h, 3 * h));
    auto o = ad::sigmoid(ad::slice(z, 1, 3 * h, 4 * h));
    cell = cell.defined() ? ad::add(ad::mul(f, cell), ad::mul(i, g)) : ad::mul(i, g);
    hidden = ad::mul(o, ad::tanh(cell));
    outputs.push_back(hidden);
  }
  if (outputs.empty()) return Tensor<T>({0, h});
  return ad::concat(outputs, 0);
}

template <typename T>
void LSTM<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".input_weight", input_weight});
  out.push_back({prefix + ".hidden_weight", hidden_weight});
  out.push_back({prefix + ".bias", bias});
}

// ---------------------------------------------------------------------------

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t d, double e)
    : features(d), eps(e), gain(Tensor<T>::full({d}, T(1))), shift(Tensor<T>({d})) {
  gain.set_requires_grad(true);
  shift.set_requires_grad(true);
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x) const {
  return ad::add(ad::mul(ad::layer_norm_rows(x, static_cast<T>(eps)), gain), shift);
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".shift", shift});
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> block_maxpool(const Tensor<T>& x, std::size_t blocks) {
  if (x.rank() != 2) throw std::invalid_argument("block_maxpool: expected (C, T), got " + ad::shape_str(x.shape()));
  const std::size_t c = x.dim(0), len = x.dim(1);
  if (blocks == 0 || len % blocks != 0) {
    throw std::invalid_argument("block_maxpool: block count " + std::to_string(blocks) +
                                " does not divide length " + std::to_string(len));
  }
  return ad::max_last(ad::reshape(x, {c, blocks, len / blocks}));
}

#define TUNET_INSTANTIATE(T)                                          \
  template void fill_uniform<T>(Tensor<T>&, double, Rng&);            \
  template class Conv1d<T>;                                           \
  template class ConvTranspose1d<T>;                                  \
  template class Linear<T>;                                           \
  template class LSTM<T>;                                             \
  template class LayerNorm<T>;                                        \
  template Tensor<T> block_maxpool<T>(const Tensor<T>&, std::size_t);

TUNET_INSTANTIATE(float)
TUNET_INSTANTIATE(double)
#undef TUNET_INSTANTIATE

}  // namespace tunet::nn
