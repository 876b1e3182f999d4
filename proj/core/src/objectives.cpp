#include "tunet/objectives.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "tunet/dsp/spectral.hpp"

namespace tunet::objectives {

void MRConfig::validate() const {
  if (resolutions.empty()) throw std::invalid_argument("MRConfig: at least one resolution required");
  for (const auto& r : resolutions) {
    if (r.win == 0 || r.win > r.nfft || r.hop == 0) {
      throw std::invalid_argument("MRConfig: resolution nfft=" + std::to_string(r.nfft) +
                                  " win=" + std::to_string(r.win) + " hop=" + std::to_string(r.hop) + " is invalid");
    }
  }
  if (n_mels == 0) throw std::invalid_argument("MRConfig: n_mels must be positive");
}

namespace {

template <typename T>
struct Constants {
  Tensor<T> window;      // (nfft)
  Tensor<T> filterbank;  // (bins, n_mels)
};

template <typename T>
const Constants<T>& constants(const Resolution& res, const MRConfig& cfg) {
  using Key = std::tuple<std::size_t, std::size_t, std::size_t, double>;
  static std::mutex mutex;
  static std::map<Key, Constants<T>> cache;
  std::lock_guard lock(mutex);
  Key key{res.nfft, res.win, cfg.n_mels, cfg.sample_rate};
  auto it = cache.find(key);
  if (it == cache.end()) {
    const auto w = dsp::padded_hann(res.nfft, res.win);
    const auto fb = dsp::mel_filterbank(cfg.n_mels, res.nfft, cfg.sample_rate);
    Constants<T> c{Tensor<T>({res.nfft}, std::vector<T>(w.begin(), w.end())),
                   Tensor<T>({fb.bins, fb.n_mels}, std::vector<T>(fb.weights.begin(), fb.weights.end()))};
    it = cache.emplace(key, std::move(c)).first;
  }
  return it->second;
}

template <typename T>
Tensor<T> flat(const Tensor<T>& x) {
  return x.rank() == 1 ? x : ad::reshape(x, {x.numel()});
}

}  // namespace

template <typename T>
Tensor<T> mel_magnitudes(const Tensor<T>& signal, const Resolution& res, const MRConfig& cfg) {
  const auto x = flat(signal);
  const std::size_t len = x.numel();
  if (len == 0) throw std::invalid_argument("mel_magnitudes: empty signal");
  const auto& c = constants<T>(res, cfg);
  const std::size_t frames = dsp::frame_count(len, res.hop);
  auto framed = ad::gather(x, dsp::frame_index(len, res.nfft, res.hop), {frames, res.nfft});
  auto power = ad::power_spectrum(ad::mul(framed, c.window));
  const T e = static_cast<T>(cfg.mag_eps);
  auto mag = ad::add_scalar(ad::sqrt(ad::add_scalar(power, e)), -std::sqrt(e));
  return ad::matmul(mag, c.filterbank);
}

template <typename T>
MRTerms<T> mr_stft_mel_terms(const Tensor<T>& estimate, const Tensor<T>& target, const MRConfig& cfg) {
  if (estimate.numel() != target.numel()) {
    throw std::invalid_argument("mr_stft_mel_loss: length mismatch " + ad::shape_str(estimate.shape()) + " vs " +
                                ad::shape_str(target.shape()));
  }
  cfg.validate();
  const T log_eps = static_cast<T>(cfg.log_eps);
  Tensor<T> sc, lm;
  for (const auto& res : cfg.resolutions) {
    auto m_hat = mel_magnitudes(estimate, res, cfg);
    auto m = mel_magnitudes(target, res, cfg);
    // silent target: ratio undefined, term dropped. num == 0: value 0, and
    // sqrt'(0) would turn the zero adjoint into NaN
    auto sq = ad::sum(ad::square(ad::sub(m, m_hat)));
    auto den_sq = ad::sum(ad::square(m));
    auto sc_r = den_sq.item() == T(0) || sq.item() == T(0) ? Tensor<T>::scalar(T(0))
                                                          : ad::div(ad::sqrt(sq), ad::sqrt(den_sq));
    auto lm_r = ad::mean(ad::abs(ad::sub(ad::log(ad::add_scalar(m, log_eps)), ad::log(ad::add_scalar(m_hat, log_eps)))));
    sc = sc.defined() ? ad::add(sc, sc_r) : sc_r;
    lm = lm.defined() ? ad::add(lm, lm_r) : lm_r;
  }
  const T inv = T(1) / static_cast<T>(cfg.resolutions.size());
  MRTerms<T> out;
  out.spectral_convergence = ad::mul_scalar(sc, inv);
  out.log_magnitude = ad::mul_scalar(lm, inv);
  out.total = ad::add(out.spectral_convergence, out.log_magnitude);
  return out;
}

template <typename T>
Tensor<T> mr_stft_mel_loss(const Tensor<T>& estimate, const Tensor<T>& target, const MRConfig& cfg) {
  return mr_stft_mel_terms(estimate, target, cfg).total;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& estimate, const Tensor<T>& target) {
  if (estimate.numel() != target.numel()) {
    throw std::invalid_argument("mse: length mismatch " + ad::shape_str(estimate.shape()) + " vs " +
                                ad::shape_str(target.shape()));
  }
  return ad::mean(ad::square(ad::sub(flat(estimate), flat(target))));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& estimate, const Tensor<T>& target, double alpha, const MRConfig& cfg) {
  if (alpha < 0) throw std::invalid_argument("total_loss: alpha must be non-negative");
  auto mr = mr_stft_mel_loss(estimate, target, cfg);
  if (alpha == 0) return mr;
  return ad::add(mr, ad::mul_scalar(mse(estimate, target), static_cast<T>(alpha)));
}

#define TUNET_INSTANTIATE(T)                                                                       \
  template Tensor<T> mel_magnitudes<T>(const Tensor<T>&, const Resolution&, const MRConfig&);      \
  template MRTerms<T> mr_stft_mel_terms<T>(const Tensor<T>&, const Tensor<T>&, const MRConfig&);   \
  template Tensor<T> mr_stft_mel_loss<T>(const Tensor<T>&, const Tensor<T>&, const MRConfig&);     \
  template Tensor<T> mse<T>(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, double, const MRConfig&);

TUNET_INSTANTIATE(float)
TUNET_INSTANTIATE(double)
#undef TUNET_INSTANTIATE

}  // namespace tunet::objectives
