#pragma once

#include <string>
#include <vector>

#include "dodt/autodiff/ops.hpp"
#include "dodt/autodiff/tensor.hpp"

// Small building blocks shared by the world model and the transformer policy.
namespace dodt::nn {

using ad::Tensor;

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

std::vector<Tensor> tensors(const ParamList& params);
void zero_parameters(const ParamList& params);
// Copies values (not gradients) between identically shaped lists.
void copy_parameters(const ParamList& from, const ParamList& to);
std::size_t parameter_count(const ParamList& params);
bool all_finite(const ParamList& params);

// Turns off requires_grad on every parameter for its lifetime. Both the
// forward pass and backward() must run inside the guard for the parameters to
// stay gradient-free.
class FreezeGuard {
 public:
  explicit FreezeGuard(const ParamList& params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> frozen_;
};

enum class Activation { kNone, kRelu, kTanh };

Tensor activate(const Tensor& x, Activation act);

// y = x W + b with W of shape [in, out].
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, ad::Rng& rng, const std::string& name);

  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out) const;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }

 private:
  Tensor weight_;
  Tensor bias_;
  std::string name_;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
      Activation act, ad::Rng& rng, const std::string& name);

  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out) const;

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kRelu;
};

// Layer normalization over the last axis with learned gain and bias.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::size_t dim, const std::string& name);

  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out) const;

 private:
  Tensor gain_;
  Tensor bias_;
  std::string name_;
};

// h' = (1 - z) * n + z * h, with
//   r = sigmoid(W_r [x, h]), z = sigmoid(W_z [x, h]),
//   n = tanh(W_nx x + r * (W_nh h)).
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::size_t input, std::size_t hidden, ad::Rng& rng,
          const std::string& name);

  Tensor operator()(const Tensor& x, const Tensor& h) const;
  void collect(ParamList& out) const;

 private:
  std::size_t hidden_ = 0;
  Linear gates_;
  Linear cand_x_;
  Linear cand_h_;
};

}  // namespace dodt::nn
