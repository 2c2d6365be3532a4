#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dodt/autodiff/tensor.hpp"

// Differentiable operations. Each op computes its output eagerly and, when any
// input requires grad and recording is enabled, appends one node to the
// current thread's Graph.
//
// Broadcasting: for add/sub/mul one operand may have a shape equal to a suffix
// of the other's (e.g. [B,T,D] with [D]); it is repeated over the leading
// dimensions. No other broadcasting is performed.
namespace dodt::ad {

enum class OpKind {
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kTanh,
  kRelu,
  kSigmoid,
  kSoftplus,
  kExp,
  kLog,
  kSoftmax,
  kLayerNorm,
  kGatherRows,
  kConcat,
  kSlice,
  kSum,
  kSumLastDim,
  kMean,
  kTranspose,
  kReshape,
  kClampMin,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);
std::span<const OpKind> all_ops();

// [M,K]x[K,N], [...,M,K]x[K,N] or batched [...,M,K]x[...,K,N].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// Over the last axis.
Tensor softmax(const Tensor& x);
// Standardizes the last axis; no affine part.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);
// Rows of a [V,D] table -> [rows.size(), D].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);
// Sum of all elements -> [1].
Tensor sum(const Tensor& x);
// Sum over the last axis; a rank-1 input reduces to [1].
Tensor sum_lastdim(const Tensor& x);
Tensor mean(const Tensor& x);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// max(x, floor) elementwise; gradient flows only where x > floor.
Tensor clamp_min(const Tensor& x, double floor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }
inline Tensor operator-(const Tensor& x) { return scale(x, -1.0); }

namespace testing {

// Fault injection for the gradient checker's own tests: the backward pass of
// `kind` scales its input gradients by 1.5. std::nullopt restores normal
// behavior.
void corrupt_derivative(std::optional<OpKind> kind);

}  // namespace testing

}  // namespace dodt::ad
