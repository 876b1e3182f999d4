#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace tunet::fft {

// Real-input forward DFT: out[k] = sum_n in[n] exp(-2 pi i k n / N),
// k = 0..N/2. Plans are cached per thread and size.
void rfft(std::span<const double> in, std::span<std::complex<double>> out);

// Unnormalized complex DFT with positive exponent:
// out[n] = sum_k in[k] exp(+2 pi i k n / N).
void inverse_dft(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

}  // namespace tunet::fft
