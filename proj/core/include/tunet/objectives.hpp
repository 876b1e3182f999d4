#pragma once

#include <cstddef>
#include <vector>

#include "tunet/tensor.hpp"

namespace tunet::objectives {

using ad::Tensor;

struct Resolution {
  std::size_t nfft;
  std::size_t hop;
  std::size_t win;
};

struct MRConfig {
  std::vector<Resolution> resolutions{{1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}};
  std::size_t n_mels = 128;
  double sample_rate = 16000.0;
  double log_eps = 1e-8;  // added before the log of mel magnitudes
  // Magnitudes are sqrt(|S|^2 + mag_eps) - sqrt(mag_eps): exactly 0 for a
  // silent frame and smooth everywhere.
  double mag_eps = 1e-12;

  void validate() const;
};

inline constexpr double kDefaultMseWeight = 10000.0;

template <typename T>
struct MRTerms {
  Tensor<T> spectral_convergence;  // mean over resolutions
  Tensor<T> log_magnitude;         // mean over resolutions
  Tensor<T> total;                 // sum of the two
};

// (frames, n_mels) mel magnitudes of a flat signal at one resolution.
template <typename T>
Tensor<T> mel_magnitudes(const Tensor<T>& signal, const Resolution& res, const MRConfig& cfg);

// Per resolution: |M - M^|_F / |M|_F + mean |log(M + e) - log(M^ + e)|,
// averaged over resolutions. M is the target's mel magnitude.
template <typename T>
MRTerms<T> mr_stft_mel_terms(const Tensor<T>& estimate, const Tensor<T>& target, const MRConfig& cfg = {});

template <typename T>
Tensor<T> mr_stft_mel_loss(const Tensor<T>& estimate, const Tensor<T>& target, const MRConfig& cfg = {});

template <typename T>
Tensor<T> mse(const Tensor<T>& estimate, const Tensor<T>& target);

// mr_stft_mel_loss + alpha * mse.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& estimate, const Tensor<T>& target, double alpha = kDefaultMseWeight,
                     const MRConfig& cfg = {});

}  // namespace tunet::objectives
