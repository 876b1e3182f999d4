#include "tunet/pipeline/optim.hpp"

#include <cmath>

namespace tunet::pipeline {

template <typename T>
Adam<T>::Adam(nn::ParameterList<T> params, AdamConfig cfg) : config(cfg), params_(std::move(params)) {
  if (!(cfg.learning_rate > 0) || !(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1) ||
      !(cfg.eps > 0)) {
    throw std::invalid_argument("Adam: need lr > 0, 0 <= beta < 1, eps > 0");
  }
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& p : params_) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
    }
  }
  ++steps;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = config.learning_rate * (mj / c1) / (std::sqrt(vj / c2) + config.eps);
      w[j] = static_cast<T>(static_cast<double>(w[j]) - update);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void Adam<T>::save(io::Checkpoint& ckpt) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.add("adam.m." + params_[i].name, m_[i]);
    ckpt.add("adam.v." + params_[i].name, v_[i]);
  }
  ckpt.config.set("adam_step", std::to_string(steps));
}

template <typename T>
void Adam<T>::load(const io::Checkpoint& ckpt) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto m = ckpt.read_vector<T>("adam.m." + params_[i].name);
    auto v = ckpt.read_vector<T>("adam.v." + params_[i].name);
    if (m.size() != m_[i].size() || v.size() != v_[i].size()) {
      throw std::runtime_error("checkpoint: Adam moments for '" + params_[i].name + "' have the wrong size");
    }
    m_[i] = std::move(m);
    v_[i] = std::move(v);
  }
  const auto* s = ckpt.config.find("adam_step");
  if (!s) throw std::runtime_error("checkpoint: missing adam_step");
  steps = parse_u64("adam_step", *s);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace tunet::pipeline
