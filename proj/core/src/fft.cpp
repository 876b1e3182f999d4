#include "tunet/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace tunet::fft {
namespace {

// The FFTW planner is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct RealPlan {
  std::size_t n = 0;
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit RealPlan(std::size_t size) : n(size) {
    std::lock_guard lock(planner_mutex());
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~RealPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  RealPlan(const RealPlan&) = delete;
  RealPlan& operator=(const RealPlan&) = delete;
};

struct ComplexPlan {
  std::size_t n = 0;
  fftw_complex* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit ComplexPlan(std::size_t size) : n(size) {
    std::lock_guard lock(planner_mutex());
    in = fftw_alloc_complex(n);
    out = fftw_alloc_complex(n);
    plan = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~ComplexPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  ComplexPlan(const ComplexPlan&) = delete;
  ComplexPlan& operator=(const ComplexPlan&) = delete;
};

template <typename Plan>
Plan& cached(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Plan>> plans;
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<Plan>(n);
  return *slot;
}

}  // namespace

void rfft(std::span<const double> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (n == 0) return;
  if (out.size() != n / 2 + 1) throw std::invalid_argument("rfft: output must hold N/2+1 bins");
  auto& p = cached<RealPlan>(n);
  std::copy(in.begin(), in.end(), p.in);
  fftw_execute(p.plan);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {p.out[k][0], p.out[k][1]};
}

void inverse_dft(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (n == 0) return;
  if (out.size() != n) throw std::invalid_argument("inverse_dft: size mismatch");
  auto& p = cached<ComplexPlan>(n);
  for (std::size_t k = 0; k < n; ++k) {
    p.in[k][0] = in[k].real();
    p.in[k][1] = in[k].imag();
  }
  fftw_execute(p.plan);
  for (std::size_t k = 0; k < n; ++k) out[k] = {p.out[k][0], p.out[k][1]};
}

}  // namespace tunet::fft
