#include "dodt/autodiff/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dodt::ad {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      const std::string& name = params_[i].name();
      throw std::invalid_argument(
          "adam_step: parameter " +
          (name.empty() ? "#" + std::to_string(i) : "'" + name + "'") +
          " has no gradient");
    }
  }
  double clip_scale = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const Tensor& p : params_)
      for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip_scale = config_.clip_norm / norm;
  }

  ++step_count_;
  const double lr = config_.lr;
  if (config_.plain_sgd) {
    for (Tensor& p : params_) {
      auto w = p.values_mut();
      auto g = p.grad();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * clip_scale * g[j];
    }
  } else {
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double t = static_cast<double>(step_count_);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].values_mut();
      auto g = params_[i].grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j] * clip_scale;
        m[j] = b1 * m[j] + (1.0 - b1) * gj;
        v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        w[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      }
    }
  }
  zero_grad();
}

}  // namespace dodt::ad
