#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dodt/autodiff/kernels.hpp"

namespace dodt::ad::kernels::parallel {

namespace {

bool worth_splitting(std::size_t m, std::size_t n, std::size_t k) {
  return m > 1 && m * n * k > 32768;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
#pragma omp parallel for schedule(static) if (worth_splitting(m, n, k))
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    std::fill(c_row, c_row + n, 0.0);
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a_row[p];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c) {
#pragma omp parallel for schedule(static) if (worth_splitting(m, n, k))
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    std::fill(c_row, c_row + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double a_pi = a[p * m + i];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_pi * b_row[j];
    }
  }
}

}  // namespace

void gemm(const GemmDims& d, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  if (d.trans_a && d.trans_b) {
    throw std::invalid_argument("gemm: transposing both operands unsupported");
  }
  if (d.trans_b) {
    std::vector<double> bt(d.k * d.n);
    const double* src = b.data();
#pragma omp parallel for schedule(static) if (d.k * d.n > kParallelThreshold)
    for (std::size_t p = 0; p < d.k; ++p)
      for (std::size_t j = 0; j < d.n; ++j) bt[p * d.n + j] = src[j * d.k + p];
    gemm_nn(d.m, d.n, d.k, a.data(), bt.data(), c.data());
  } else if (d.trans_a) {
    gemm_tn(d.m, d.n, d.k, a.data(), b.data(), c.data());
  } else {
    gemm_nn(d.m, d.n, d.k, a.data(), b.data(), c.data());
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = y.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, xr[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void layer_norm_rows(std::size_t rows, std::size_t cols, double eps,
                     std::span<const double> x, std::span<double> y,
                     std::span<double> inv_std) {
  const double inv_cols = 1.0 / static_cast<double>(cols);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = y.data() + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean *= inv_cols;
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double dlt = xr[j] - mean;
      var += dlt * dlt;
    }
    var *= inv_cols;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * is;
  }
}

}  // namespace dodt::ad::kernels::parallel
