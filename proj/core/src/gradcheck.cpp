#include "tunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tunet::ad {

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> wrt,
                           const GradCheckOptions& options) {
  std::vector<bool> restore(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    restore[i] = wrt[i].requires_grad();
    wrt[i].set_requires_grad(true);
    wrt[i].zero_grad();
  }

  std::vector<std::vector<double>> analytic(wrt.size());
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> l = loss();
    tape.backward(l);
    for (std::size_t i = 0; i < wrt.size(); ++i) {
      auto g = wrt[i].grad();
      analytic[i].assign(wrt[i].numel(), 0.0);
      std::copy(g.begin(), g.end(), analytic[i].begin());
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < wrt.size(); ++i)
    for (std::size_t j = 0; j < wrt[i].numel(); ++j) coords.emplace_back(i, j);
  if (options.max_coords > 0 && coords.size() > options.max_coords) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
  }

  GradCheckResult result;
  NoGradScope<double> no_grad;
  auto evaluate = [&](std::uint64_t& sig) {
    RegimeRecorder regime;
    const double v = loss().item();
    sig = regime.signature();
    return v;
  };
  std::uint64_t base_sig = 0, up_sig = 0, down_sig = 0;
  evaluate(base_sig);
  for (auto [i, j] : coords) {
    if (options.max_coords > 0 && result.coords_checked == options.max_coords) break;
    auto data = wrt[i].mutable_data();
    const double orig = data[j];
    data[j] = orig + options.eps;
    const double up = evaluate(up_sig);
    data[j] = orig - options.eps;
    const double down = evaluate(down_sig);
    data[j] = orig;
    if (up_sig != base_sig || down_sig != base_sig) {
      ++result.kink_skipped;
      continue;
    }
    const double fd = (up - down) / (2.0 * options.eps);
    const double an = analytic[i][j];
    ++result.coords_checked;
    if (!std::isfinite(fd) || !std::isfinite(an)) {
      ++result.nan_count;
      continue;
    }
    const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(an - fd) / denom);
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    wrt[i].zero_grad();
    wrt[i].set_requires_grad(restore[i]);
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x,
                           double eps) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check([&] { return f(x); }, {x}, opts);
}

}  // namespace tunet::ad
