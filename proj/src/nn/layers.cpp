#include "dodt/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dodt::nn {

std::vector<Tensor> tensors(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

void zero_parameters(const ParamList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
  }
}

void copy_parameters(const ParamList& from, const ParamList& to) {
  if (from.size() != to.size()) {
    throw std::invalid_argument("copy_parameters: parameter lists differ");
  }
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].tensor.shape() != to[i].tensor.shape()) {
      throw std::invalid_argument("copy_parameters: shape mismatch for " +
                                  from[i].name);
    }
    Tensor dst = to[i].tensor;
    std::copy(from[i].tensor.values().begin(), from[i].tensor.values().end(),
              dst.values_mut().begin());
  }
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

bool all_finite(const ParamList& params) {
  for (const auto& p : params)
    for (double v : p.tensor.values())
      if (!std::isfinite(v)) return false;
  return true;
}

FreezeGuard::FreezeGuard(const ParamList& params) {
  for (const auto& p : params) {
    if (p.tensor.requires_grad()) {
      Tensor t = p.tensor;
      t.set_requires_grad(false);
      frozen_.push_back(t);
    }
  }
}

FreezeGuard::~FreezeGuard() {
  for (auto& t : frozen_) t.set_requires_grad(true);
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return ad::relu(x);
    case Activation::kTanh:
      return ad::tanh(x);
    case Activation::kNone:
      break;
  }
  return x;
}

Linear::Linear(std::size_t in, std::size_t out, ad::Rng& rng,
               const std::string& name)
    : name_(name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = Tensor::uniform({in, out}, rng, -bound, bound, true);
  weight_.set_name(name + ".weight");
  bias_ = Tensor::zeros({out}, true);
  bias_.set_name(name + ".bias");
}

Tensor Linear::operator()(const Tensor& x) const {
  return ad::add(ad::matmul(x, weight_), bias_);
}

void Linear::collect(ParamList& out) const {
  out.push_back({weight_.name(), weight_});
  out.push_back({bias_.name(), bias_});
}

Mlp::Mlp(std::size_t in, const std::vector<std::size_t>& hidden,
         std::size_t out, Activation act, ad::Rng& rng,
         const std::string& name)
    : act_(act) {
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(width, hidden[i], rng, name + "." + std::to_string(i));
    width = hidden[i];
  }
  layers_.emplace_back(width, out, rng,
                       name + "." + std::to_string(hidden.size()));
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = activate(h, act_);
  }
  return h;
}

void Mlp::collect(ParamList& out) const {
  for (const auto& layer : layers_) layer.collect(out);
}

LayerNorm::LayerNorm(std::size_t dim, const std::string& name) : name_(name) {
  gain_ = Tensor::full({dim}, 1.0, true);
  gain_.set_name(name + ".gain");
  bias_ = Tensor::zeros({dim}, true);
  bias_.set_name(name + ".bias");
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ad::add(ad::mul(ad::layer_norm(x), gain_), bias_);
}

void LayerNorm::collect(ParamList& out) const {
  out.push_back({gain_.name(), gain_});
  out.push_back({bias_.name(), bias_});
}

GruCell::GruCell(std::size_t input, std::size_t hidden, ad::Rng& rng,
                 const std::string& name)
    : hidden_(hidden),
      gates_(input + hidden, 2 * hidden, rng, name + ".gates"),
      cand_x_(input, hidden, rng, name + ".cand_x"),
      cand_h_(hidden, hidden, rng, name + ".cand_h") {}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  const Tensor xh[] = {x, h};
  const Tensor gates = ad::sigmoid(gates_(ad::concat(xh, x.rank() - 1)));
  const std::size_t axis = gates.rank() - 1;
  const Tensor reset = ad::slice(gates, axis, 0, hidden_);
  const Tensor update = ad::slice(gates, axis, hidden_, hidden_);
  const Tensor cand = ad::tanh(ad::add(cand_x_(x), ad::mul(reset, cand_h_(h))));
  // (1 - z) * n + z * h == n + z * (h - n)
  return ad::add(cand, ad::mul(update, ad::sub(h, cand)));
}

void GruCell::collect(ParamList& out) const {
  gates_.collect(out);
  cand_x_.collect(out);
  cand_h_.collect(out);
}

}  // namespace dodt::nn
