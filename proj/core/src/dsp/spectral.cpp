#include "tunet/dsp/spectral.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include "tunet/fft.hpp"

namespace tunet::dsp {

std::vector<double> Spectrogram::power() const {
  std::vector<double> p(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) p[i] = std::norm(values[i]);
  return p;
}

std::vector<double> Spectrogram::magnitude() const {
  std::vector<double> m(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m[i] = std::abs(values[i]);
  return m;
}

std::vector<double> padded_hann(std::size_t nfft, std::size_t win_len) {
  if (win_len == 0 || win_len > nfft) throw std::invalid_argument("padded_hann: need 0 < win_len <= nfft");
  std::vector<double> w(nfft, 0.0);
  const std::size_t left = (nfft - win_len) / 2;
  for (std::size_t i = 0; i < win_len; ++i) {
    w[left + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win_len));
  }
  return w;
}

std::size_t frame_count(std::size_t len, std::size_t hop) {
  if (hop == 0) throw std::invalid_argument("frame_count: hop must be positive");
  return len == 0 ? 0 : 1 + len / hop;
}

namespace {
std::size_t reflect(std::ptrdiff_t i, std::ptrdiff_t len) {
  if (len == 1) return 0;
  const std::ptrdiff_t period = 2 * (len - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < len ? i : period - i);
}
}  // namespace

std::shared_ptr<const std::vector<std::size_t>> frame_index(std::size_t len, std::size_t nfft, std::size_t hop) {
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const std::vector<std::size_t>>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{len, nfft, hop}];
  if (!slot) {
    const std::size_t frames = frame_count(len, hop);
    auto idx = std::make_shared<std::vector<std::size_t>>(frames * nfft);
    const auto half = static_cast<std::ptrdiff_t>(nfft / 2);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t n = 0; n < nfft; ++n) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * hop + n) - half;
        (*idx)[t * nfft + n] = reflect(src, static_cast<std::ptrdiff_t>(len));
      }
    }
    slot = std::move(idx);
  }
  return slot;
}

Spectrogram stft(std::span<const double> x, std::size_t nfft, std::size_t hop, std::size_t win_len,
                 double sample_rate) {
  Spectrogram s;
  s.nfft = nfft;
  s.hop = hop;
  s.win_len = win_len;
  s.sample_rate = sample_rate;
  s.bins = nfft / 2 + 1;
  const auto window = padded_hann(nfft, win_len);
  s.frames = frame_count(x.size(), hop);
  if (s.frames == 0) return s;
  const auto idx = frame_index(x.size(), nfft, hop);
  s.values.resize(s.frames * s.bins);
  std::vector<double> frame(nfft);
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t n = 0; n < nfft; ++n) frame[n] = x[(*idx)[t * nfft + n]] * window[n];
    fft::rfft(frame, std::span<std::complex<double>>(s.values.data() + t * s.bins, s.bins));
  }
  return s;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t nfft, double sample_rate) {
  if (n_mels == 0 || nfft < 2) throw std::invalid_argument("mel_filterbank: need n_mels >= 1 and nfft >= 2");
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.bins = nfft / 2 + 1;
  fb.weights.assign(fb.bins * n_mels, 0.0);
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  for (std::size_t k = 0; k < fb.bins; ++k) {
    const double f = sample_rate * static_cast<double>(k) / static_cast<double>(nfft);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb.weights[k * n_mels + m] = w;
    }
  }
  return fb;
}

std::vector<double> mel_project(const Spectrogram& spec, const MelFilterbank& fb) {
  if (fb.bins != spec.bins) throw std::invalid_argument("mel_project: filterbank bins do not match spectrogram");
  std::vector<double> out(spec.frames * fb.n_mels, 0.0);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t k = 0; k < spec.bins; ++k) {
      const double mag = std::abs(spec.at(t, k));
      if (mag == 0.0) continue;
      for (std::size_t m = 0; m < fb.n_mels; ++m) out[t * fb.n_mels + m] += mag * fb.weights[k * fb.n_mels + m];
    }
  }
  return out;
}

}  // namespace tunet::dsp
