#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace tunet::dsp {

struct Spectrogram {
  std::size_t nfft = 0;
  std::size_t hop = 0;
  std::size_t win_len = 0;
  double sample_rate = 16000.0;
  std::size_t frames = 0;
  std::size_t bins = 0;                     // nfft / 2 + 1
  std::vector<std::complex<double>> values; // frames x bins, row-major

  std::complex<double> at(std::size_t frame, std::size_t bin) const { return values[frame * bins + bin]; }
  std::vector<double> power() const;
  std::vector<double> magnitude() const;
};

// Periodic Hann window of `win_len` samples, zero-padded and centred in `nfft`.
std::vector<double> padded_hann(std::size_t nfft, std::size_t win_len);

// 1 + len / hop for centred framing, 0 for empty input.
std::size_t frame_count(std::size_t len, std::size_t hop);

// Flat (frames * nfft) source indices for centred framing with reflect
// padding of nfft/2 on both sides. Cached per (len, nfft, hop).
std::shared_ptr<const std::vector<std::size_t>> frame_index(std::size_t len, std::size_t nfft, std::size_t hop);

Spectrogram stft(std::span<const double> x, std::size_t nfft, std::size_t hop, std::size_t win_len,
                 double sample_rate = 16000.0);

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t bins = 0;
  std::vector<double> weights; // bins x n_mels, row-major (ready for |S| * W)
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK-scale filters between 0 Hz and sample_rate / 2, peak 1.
MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t nfft, double sample_rate = 16000.0);

// frames x n_mels magnitudes.
std::vector<double> mel_project(const Spectrogram& spec, const MelFilterbank& fb);

}  // namespace tunet::dsp
