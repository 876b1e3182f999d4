#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "tunet/random.hpp"

namespace tunet::dsp {

// One second-order section, a0 == 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

// Chebyshev Type I low-pass. `cutoff` is normalized to Nyquist (0, 1);
// `ripple_db` is the passband ripple, and the ripple peaks sit at 0 dB.
struct FilterSpec {
  int order = 8;
  double ripple_db = 0.05;
  double cutoff = 0.5;
  std::vector<Biquad> sections;

  bool operator==(const FilterSpec& o) const;
};

FilterSpec cheby1_design(int order, double ripple_db, double cutoff);

// The baseline anti-aliasing filter: order 8, 0.05 dB ripple, cutoff 0.5.
FilterSpec default_antialias_filter();

// Order uniform in {4..10}, ripple log-uniform in [0.05, 5] dB, cutoff 0.5.
FilterSpec random_filter_spec(Rng& rng);

std::complex<double> frequency_response(const FilterSpec& spec, double omega);
std::vector<std::complex<double>> poles(const FilterSpec& spec);
double max_pole_radius(const FilterSpec& spec);

// Causal cascade in direct form II transposed; output length == input length.
std::vector<double> sos_filter(std::span<const double> x, const FilterSpec& spec);
// Forward-backward (zero-phase) variant.
std::vector<double> sos_filtfilt(std::span<const double> x, const FilterSpec& spec);

}  // namespace tunet::dsp
