#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "tunet/random.hpp"
#include "tunet/tensor.hpp"

namespace tunet::test_support {

inline ad::Tensor<double> random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                                        bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel_of(shape));
  for (auto& x : v) x = u(rng);
  ad::Tensor<double> t(std::move(shape), std::move(v));
  if (grad) t.set_requires_grad(true);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-300);
}

}  // namespace tunet::test_support
