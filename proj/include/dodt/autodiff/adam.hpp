#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dodt/autodiff/tensor.hpp"

namespace dodt::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Literal w <- w - lr * g, ignoring the moment estimates.
  bool plain_sgd = false;
  // Global gradient-norm clip applied before the update; 0 disables.
  double clip_norm = 0.0;
};

// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
// step() requires every parameter to carry a gradient and zeroes the
// gradients afterwards.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();

  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::span<const Tensor> params() const { return params_; }
  std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

  // Zeroes gradients of the tracked parameters without updating them.
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_count_ = 0;
};

}  // namespace dodt::ad
