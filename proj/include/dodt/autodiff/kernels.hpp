#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels behind the autodiff ops. Two builds of each kernel
// exist: `serial` is the plain reference used by tests and benchmarks, and
// `parallel` splits the outer loop across OpenMP threads. Every output element
// is produced by one thread with the same accumulation order as the serial
// kernel, so both return bit-identical results for any thread count.
namespace dodt::ad::kernels {

struct GemmDims {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // columns of op(B) and C
  std::size_t k = 0;  // shared dimension
  bool trans_a = false;
  bool trans_b = false;
};

// Loops shorter than this run on the calling thread.
inline constexpr std::size_t kParallelThreshold = 4096;

namespace serial {

// C[m,n] = op(A) op(B); C is overwritten. Accumulation over k is ascending.
void gemm(const GemmDims& dims, std::span<const double> a,
          std::span<const double> b, std::span<double> c);
// Row-wise softmax of a [rows, cols] block. -inf entries map to exactly 0.
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);
// Row-wise standardization; writes normalized rows and the inverse stddev.
void layer_norm_rows(std::size_t rows, std::size_t cols, double eps,
                     std::span<const double> x, std::span<double> y,
                     std::span<double> inv_std);

}  // namespace serial

namespace parallel {

void gemm(const GemmDims& dims, std::span<const double> a,
          std::span<const double> b, std::span<double> c);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);
void layer_norm_rows(std::size_t rows, std::size_t cols, double eps,
                     std::span<const double> x, std::span<double> y,
                     std::span<double> inv_std);

// y[i] = f(x[i])
template <typename F>
void map(std::span<const double> x, std::span<double> y, F f) {
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

// out[i] = f(a[i], b[i % b.size()]); b broadcasts over leading dimensions.
template <typename F>
void zip(std::span<const double> a, std::span<const double> b,
         std::span<double> out, F f) {
  const std::size_t n = a.size();
  const std::size_t nb = b.size();
  if (nb == n) {
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  } else {
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i % nb]);
  }
}

}  // namespace parallel

}  // namespace dodt::ad::kernels
