#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tunet/dsp/filter.hpp"

namespace tunet::dsp {

inline constexpr std::size_t kSincHalfTaps = 64;
inline constexpr double kSincKaiserBeta = 8.0;

// Linear-phase windowed-sinc low-pass at half the Nyquist rate, 2*64+1 taps,
// Kaiser window. Scaled for interpolation (h[center] == 1, zeros at even
// offsets), i.e. already carrying the x2 gain compensation.
const std::vector<double>& halfband_interpolator();

// Anti-alias with `spec` (causal), then keep every second sample.
// Odd-length input is zero-padded by one sample first.
std::vector<double> downsample2(std::span<const double> x16k, const FilterSpec& spec);

// Zero-stuff x2 and interpolate with the centred windowed-sinc; original
// samples pass through unchanged. Output length is 2 * input length.
std::vector<double> upsample2(std::span<const double> x8k);

// Decimation through the windowed-sinc instead of a Chebyshev filter.
std::vector<double> sinc_downsample2(std::span<const double> x16k);

}  // namespace tunet::dsp
