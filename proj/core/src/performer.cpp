#include "tunet/performer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tunet::performer {

void PerformerConfig::validate() const {
  if (heads == 0 || head_dim == 0 || model_dim == 0 || ff_mult == 0) {
    throw std::invalid_argument("PerformerConfig: heads, head_dim, model_dim and ff_mult must be positive");
  }
  if (heads * head_dim > model_dim) {
    throw std::invalid_argument("PerformerConfig: heads * head_dim (" + std::to_string(heads * head_dim) +
                                ") exceeds model_dim (" + std::to_string(model_dim) + ")");
  }
  if (local_heads > heads) throw std::invalid_argument("PerformerConfig: local_heads exceeds heads");
  if (local_heads < heads && random_features == 0) {
    throw std::invalid_argument("PerformerConfig: FAVOR+ heads need random_features >= 1");
  }
}

namespace {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const char* op) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw std::invalid_argument(std::string(op) + ": incompatible Q " + ad::shape_str(q.shape()) + ", K " +
                                ad::shape_str(k.shape()) + ", V " + ad::shape_str(v.shape()));
  }
}

template <typename T>
Tensor<T> scaled_scores(const Tensor<T>& q, const Tensor<T>& k) {
  const T scale = T(1) / std::sqrt(static_cast<T>(q.dim(1)));
  return ad::mul_scalar(ad::matmul(q, ad::transpose(k)), scale);
}

}  // namespace

template <typename T>
Tensor<T> exact_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  check_qkv(q, k, v, "exact_attention");
  return ad::matmul(ad::softmax_rows(scaled_scores(q, k)), v);
}

std::pair<std::size_t, std::size_t> local_window_range(std::size_t i, std::size_t n, std::size_t window) {
  const std::size_t w = std::min(std::max<std::size_t>(window, 1), n);
  const std::size_t back = (w - 1) / 2;
  std::size_t first = i > back ? i - back : 0;
  first = std::min(first, n - w);
  return {first, first + w};
}

template <typename T>
Tensor<T> local_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t window) {
  check_qkv(q, k, v, "local_attention");
  if (window == 0) throw std::invalid_argument("local_attention: window must be >= 1");
  const std::size_t nq = q.dim(0), nk = k.dim(0);
  if (nq != nk) throw std::invalid_argument("local_attention: query and key lengths must match");
  auto keep = std::make_shared<std::vector<char>>(nq * nk, 0);
  for (std::size_t i = 0; i < nq; ++i) {
    auto [first, last] = local_window_range(i, nk, window);
    std::fill(keep->begin() + static_cast<std::ptrdiff_t>(i * nk + first),
              keep->begin() + static_cast<std::ptrdiff_t>(i * nk + last), 1);
  }
  return ad::matmul(ad::softmax_rows(scaled_scores(q, k), keep), v);
}

template <typename T>
Tensor<T> favor_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& features,
                          FavorDiagnostics* diagnostics) {
  check_qkv(q, k, v, "favor_attention");
  const std::size_t d = q.dim(1);
  if (features.rank() != 2 || features.dim(1) != d || features.dim(0) == 0) {
    throw std::invalid_argument("favor_attention: features " + ad::shape_str(features.shape()) +
                                " do not match head dim " + std::to_string(d));
  }
  const std::size_t m = features.dim(0), nq = q.dim(0), dv = v.dim(1);
  const T scale = std::pow(static_cast<T>(d), T(-0.25));
  const T ratio = T(1) / std::sqrt(static_cast<T>(m));
  const auto proj_t = ad::transpose(features);  // (d, m)

  // Exponent w^T x' - |x'|^2 / 2 for every (row, feature).
  auto exponent = [&](const Tensor<T>& x) {
    auto xs = ad::mul_scalar(x, scale);
    auto half_norm = ad::mul_scalar(ad::sum_last(ad::square(xs)), T(0.5));
    return ad::sub(ad::matmul(xs, proj_t), ad::repeat_last(half_norm, m));
  };

  auto eq = exponent(q);
  Tensor<T> row_max({nq});
  {
    auto src = eq.data();
    auto dst = row_max.mutable_data();
    for (std::size_t i = 0; i < nq; ++i) {
      dst[i] = *std::max_element(src.begin() + static_cast<std::ptrdiff_t>(i * m),
                                 src.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
    }
  }
  auto phi_q = ad::mul_scalar(ad::exp(ad::sub(eq, ad::repeat_last(row_max, m))), ratio);  // (Nq, m)

  auto ek = exponent(k);
  const T key_max = *std::max_element(ek.data().begin(), ek.data().end());
  auto phi_k = ad::mul_scalar(ad::exp(ad::add_scalar(ek, -key_max)), ratio);  // (Nk, m)

  auto phi_k_t = ad::transpose(phi_k);                                    // (m, Nk)
  auto numerator = ad::matmul(phi_q, ad::matmul(phi_k_t, v));             // (Nq, dv)
  auto key_sum = ad::reshape(ad::sum_last(phi_k_t), {m, 1});
  auto normalizer = ad::reshape(ad::matmul(phi_q, key_sum), {nq});        // (Nq)

  constexpr double kFloor = 1e-9;
  const auto nd = normalizer.data();
  const bool tiny = std::any_of(nd.begin(), nd.end(), [](T x) { return static_cast<double>(x) < kFloor; });
  if (diagnostics) {
    ++diagnostics->calls;
    if (tiny) ++diagnostics->stabilized;
  }
  if (tiny) normalizer = ad::add_scalar(normalizer, static_cast<T>(kFloor));
  return ad::div(numerator, ad::repeat_last(normalizer, dv));
}

template <typename T>
Tensor<T> orthogonal_random_features(std::size_t m, std::size_t d, Rng& rng) {
  if (m == 0 || d == 0) throw std::invalid_argument("orthogonal_random_features: m and d must be positive");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor<T> out({m, d});
  auto dst = out.mutable_data();
  std::size_t row = 0;
  while (row < m) {
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                                           static_cast<Eigen::Index>(d));
    // Sign fix on diag(R) makes Q Haar distributed.
    const Eigen::MatrixXd r_factor = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < basis.cols(); ++j) {
      if (r_factor(j, j) < 0) basis.col(j) *= -1.0;
    }
    for (std::size_t r = 0; r < d && row < m; ++r, ++row) {
      for (std::size_t c = 0; c < d; ++c) {
        dst[row * d + c] = static_cast<T>(basis(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)));
      }
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    double norm2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double z = gauss(rng);
      norm2 += z * z;
    }
    const T len = static_cast<T>(std::sqrt(norm2));
    for (std::size_t c = 0; c < d; ++c) dst[r * d + c] *= len;
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
PerformerBlock<T>::PerformerBlock(const PerformerConfig& cfg)
    : config(cfg), attn_norm(cfg.model_dim), to_q(cfg.model_dim, cfg.inner_dim()),
      to_k(cfg.model_dim, cfg.inner_dim()), to_v(cfg.model_dim, cfg.inner_dim()),
      to_out(cfg.inner_dim(), cfg.model_dim), ff_norm(cfg.model_dim),
      ff_in(cfg.model_dim, cfg.ff_mult * cfg.model_dim), ff_out(cfg.ff_mult * cfg.model_dim, cfg.model_dim) {
  cfg.validate();
  // Allocated up front so a checkpoint can be loaded into an uninitialised block.
  if (cfg.local_heads < cfg.heads) features = Tensor<T>({cfg.random_features, cfg.head_dim});
}

template <typename T>
void PerformerBlock<T>::init(Rng& rng) {
  to_q.init(rng);
  to_k.init(rng);
  to_v.init(rng);
  to_out.init(rng);
  ff_in.init(rng);
  ff_out.init(rng);
  redraw_features(rng);
}

template <typename T>
void PerformerBlock<T>::redraw_features(Rng& rng) {
  if (config.local_heads < config.heads) {
    features = orthogonal_random_features<T>(config.random_features, config.head_dim, rng);
  }
}

template <typename T>
Tensor<T> PerformerBlock<T>::attention(const Tensor<T>& x, FavorDiagnostics* diagnostics) const {
  const std::size_t n = x.dim(0), hd = config.head_dim;
  const std::size_t window = config.local_window ? config.local_window : std::max<std::size_t>(n / 8, 1);
  const std::size_t global_heads = config.heads - config.local_heads;
  auto q = to_q.forward(x);
  auto k = to_k.forward(x);
  auto v = to_v.forward(x);
  std::vector<Tensor<T>> heads;
  heads.reserve(config.heads);
  for (std::size_t h = 0; h < config.heads; ++h) {
    auto qh = ad::slice(q, 1, h * hd, (h + 1) * hd);
    auto kh = ad::slice(k, 1, h * hd, (h + 1) * hd);
    auto vh = ad::slice(v, 1, h * hd, (h + 1) * hd);
    heads.push_back(h < global_heads ? favor_attention(qh, kh, vh, features, diagnostics)
                                     : local_attention(qh, kh, vh, window));
  }
  return to_out.forward(heads.size() == 1 ? heads[0] : ad::concat(heads, 1));
}

template <typename T>
Tensor<T> PerformerBlock<T>::forward(const Tensor<T>& x, FavorDiagnostics* diagnostics) const {
  if (x.rank() != 2 || x.dim(1) != config.model_dim || x.dim(0) == 0) {
    throw std::invalid_argument("PerformerBlock: expected (N, " + std::to_string(config.model_dim) +
                                ") input, got " + ad::shape_str(x.shape()));
  }
  auto h = ad::add(x, attention(attn_norm.forward(x), diagnostics));
  auto ff = ff_out.forward(nn::leaky_relu(ff_in.forward(ff_norm.forward(h)), config.leaky_slope));
  return ad::add(h, ff);
}

template <typename T>
void PerformerBlock<T>::collect(const std::string& prefix, nn::ParameterList<T>& out) const {
  attn_norm.collect(prefix + ".attn_norm", out);
  to_q.collect(prefix + ".to_q", out);
  to_k.collect(prefix + ".to_k", out);
  to_v.collect(prefix + ".to_v", out);
  to_out.collect(prefix + ".to_out", out);
  ff_norm.collect(prefix + ".ff_norm", out);
  ff_in.collect(prefix + ".ff_in", out);
  ff_out.collect(prefix + ".ff_out", out);
}

template <typename T>
void PerformerBlock<T>::collect_buffers(const std::string& prefix, nn::ParameterList<T>& out) const {
  if (features.defined()) out.push_back({prefix + ".features", features});
}

// ---------------------------------------------------------------------------

template <typename T>
PerformerStack<T>::PerformerStack(const PerformerConfig& cfg) : config(cfg) {
  if (cfg.layers > 0) cfg.validate();
  blocks.reserve(cfg.layers);
  for (std::size_t i = 0; i < cfg.layers; ++i) blocks.emplace_back(cfg);
}

template <typename T>
void PerformerStack<T>::init(Rng& rng) {
  for (auto& b : blocks) b.init(rng);
}

template <typename T>
void PerformerStack<T>::redraw_features(std::uint64_t seed) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Rng rng = make_rng(seed, {0xFEA7u, i});
    blocks[i].redraw_features(rng);
  }
}

template <typename T>
Tensor<T> PerformerStack<T>::forward(const Tensor<T>& x, FavorDiagnostics* diagnostics) const {
  Tensor<T> h = x;
  for (const auto& b : blocks) h = b.forward(h, diagnostics);
  return h;
}

template <typename T>
void PerformerStack<T>::collect(const std::string& prefix, nn::ParameterList<T>& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".layer" + std::to_string(i), out);
}

template <typename T>
void PerformerStack<T>::collect_buffers(const std::string& prefix, nn::ParameterList<T>& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect_buffers(prefix + ".layer" + std::to_string(i), out);
  }
}

#define TUNET_INSTANTIATE(T)                                                                              \
  template Tensor<T> exact_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> local_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> favor_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                        const Tensor<T>&, FavorDiagnostics*);                             \
  template Tensor<T> orthogonal_random_features<T>(std::size_t, std::size_t, Rng&);                       \
  template class PerformerBlock<T>;                                                                       \
  template class PerformerStack<T>;

TUNET_INSTANTIATE(float)
TUNET_INSTANTIATE(double)
#undef TUNET_INSTANTIATE

}  // namespace tunet::performer
