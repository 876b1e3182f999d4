#include "tunet/dsp/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tunet::dsp {

bool FilterSpec::operator==(const FilterSpec& o) const {
  if (order != o.order || ripple_db != o.ripple_db || cutoff != o.cutoff || sections.size() != o.sections.size()) {
    return false;
  }
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto& a = sections[i];
    const auto& b = o.sections[i];
    if (a.b0 != b.b0 || a.b1 != b.b1 || a.b2 != b.b2 || a.a1 != b.a1 || a.a2 != b.a2) return false;
  }
  return true;
}

FilterSpec cheby1_design(int order, double ripple_db, double cutoff) {
  if (order < 1 || order > 16) throw std::invalid_argument("cheby1_design: order " + std::to_string(order) + " outside [1, 16]");
  if (!(ripple_db > 0.0 && ripple_db <= 10.0)) {
    throw std::invalid_argument("cheby1_design: ripple " + std::to_string(ripple_db) + " dB outside (0, 10]");
  }
  if (!(cutoff > 0.0 && cutoff < 1.0)) {
    throw std::invalid_argument("cheby1_design: cutoff " + std::to_string(cutoff) + " outside (0, 1)");
  }
  using std::numbers::pi;
  const double eps = std::sqrt(std::pow(10.0, ripple_db / 10.0) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;
  // Bilinear map s = (z - 1) / (z + 1); the analog edge is prewarped.
  const double warped = std::tan(pi * cutoff / 2.0);

  FilterSpec spec;
  spec.order = order;
  spec.ripple_db = ripple_db;
  spec.cutoff = cutoff;

  auto digital_pole = [&](int k) {
    const double theta = (2.0 * k - 1.0) * pi / (2.0 * order);
    const std::complex<double> p(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
    const std::complex<double> s = warped * p;
    return (1.0 + s) / (1.0 - s);
  };

  // Each section is normalized to unit DC gain; the overall DC target is
  // applied to the first one.
  for (int k = 1; k <= order / 2; ++k) {
    const auto z = digital_pole(k);
    Biquad q;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    const double g = (1.0 + q.a1 + q.a2) / 4.0;
    q.b0 = g;
    q.b1 = 2.0 * g;
    q.b2 = g;
    spec.sections.push_back(q);
  }
  if (order % 2 == 1) {
    const double zr = digital_pole((order + 1) / 2).real();
    Biquad q;
    q.a1 = -zr;
    const double g = (1.0 - zr) / 2.0;
    q.b0 = g;
    q.b1 = g;
    spec.sections.push_back(q);
  }
  const double dc = order % 2 == 0 ? 1.0 / std::sqrt(1.0 + eps * eps) : 1.0;
  auto& first = spec.sections.front();
  first.b0 *= dc;
  first.b1 *= dc;
  first.b2 *= dc;
  return spec;
}

FilterSpec default_antialias_filter() { return cheby1_design(8, 0.05, 0.5); }

FilterSpec random_filter_spec(Rng& rng) {
  std::uniform_int_distribution<int> order(4, 10);
  std::uniform_real_distribution<double> log_ripple(std::log(0.05), std::log(5.0));
  const int n = order(rng);
  const double r = std::clamp(std::exp(log_ripple(rng)), 0.05, 5.0);
  return cheby1_design(n, r, 0.5);
}

std::complex<double> frequency_response(const FilterSpec& spec, double omega) {
  const std::complex<double> z1 = std::polar(1.0, -omega);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h(1.0, 0.0);
  for (const auto& s : spec.sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

std::vector<std::complex<double>> poles(const FilterSpec& spec) {
  std::vector<std::complex<double>> out;
  for (const auto& s : spec.sections) {
    // Roots of z^2 + a1 z + a2 (a first-order section has a2 == 0 and a root at 0).
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
    out.push_back((-s.a1 + disc) / 2.0);
    out.push_back((-s.a1 - disc) / 2.0);
  }
  return out;
}

double max_pole_radius(const FilterSpec& spec) {
  double r = 0.0;
  for (auto p : poles(spec)) r = std::max(r, std::abs(p));
  return r;
}

std::vector<double> sos_filter(std::span<const double> x, const FilterSpec& spec) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : spec.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> sos_filtfilt(std::span<const double> x, const FilterSpec& spec) {
  auto y = sos_filter(x, spec);
  std::reverse(y.begin(), y.end());
  y = sos_filter(y, spec);
  std::reverse(y.begin(), y.end());
  return y;
}

}  // namespace tunet::dsp
