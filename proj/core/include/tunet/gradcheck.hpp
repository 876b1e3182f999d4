#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "tunet/tensor.hpp"

namespace tunet::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t nan_count = 0;  // coordinates where f or its adjoint was not finite
  std::size_t kink_skipped = 0;  // +-eps landed on different sides of a relu/abs/max kink
};

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  std::size_t max_coords = 0;
  std::uint64_t seed = 1;
};

// Compares reverse-mode gradients of the scalar `loss()` with respect to each
// tensor in `wrt` against central differences. Per coordinate the error is
// |analytic - fd| / max(|analytic|, |fd|, 1e-8); the maximum is returned.
// A coordinate whose +-eps evaluations change the regime of any relu, abs or
// max (see RegimeRecorder) is not differentiable at that scale; it is counted
// in kink_skipped and the next sampled coordinate takes its place.
// `loss` is re-evaluated with perturbed leaf data, so it must read `wrt`.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> wrt,
                           const GradCheckOptions& options = {});

// Single-input convenience form.
GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x,
                           double eps = 1e-5);

}  // namespace tunet::ad
