#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tunet/checkpoint.hpp"
#include "tunet/nn.hpp"

namespace tunet::pipeline {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'; step aborted"), parameter(param) {}
  std::string parameter;
};

// Bias-corrected Adam over a fixed parameter list. Gradients are read from
// the parameters' grad buffers; a parameter no adjoint reached counts as a
// zero gradient.
template <typename T>
class Adam {
 public:
  Adam(nn::ParameterList<T> params, AdamConfig config);

  // Throws NonFiniteGradient before touching any state if a gradient is NaN/inf.
  void step();
  void zero_grad();

  // Moments go under "adam.m.<name>" / "adam.v.<name>", the step count
  // into the config block as adam_step.
  void save(io::Checkpoint& ckpt) const;
  void load(const io::Checkpoint& ckpt);

  AdamConfig config;
  std::uint64_t steps = 0;
  const nn::ParameterList<T>& parameters() const { return params_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  nn::ParameterList<T> params_;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace tunet::pipeline
