#include "dodt/autodiff/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dodt/autodiff/kernels.hpp"

namespace dodt::ad {

namespace {

namespace kn = kernels::parallel;
using ImplPtr = std::shared_ptr<detail::TensorImpl>;

constexpr std::array<std::pair<OpKind, const char*>, 23> kOpNames{{
    {OpKind::kMatmul, "matmul"},
    {OpKind::kAdd, "add"},
    {OpKind::kSub, "sub"},
    {OpKind::kMul, "mul"},
    {OpKind::kScale, "scale"},
    {OpKind::kAddScalar, "add_scalar"},
    {OpKind::kTanh, "tanh"},
    {OpKind::kRelu, "relu"},
    {OpKind::kSigmoid, "sigmoid"},
    {OpKind::kSoftplus, "softplus"},
    {OpKind::kExp, "exp"},
    {OpKind::kLog, "log"},
    {OpKind::kSoftmax, "softmax"},
    {OpKind::kLayerNorm, "layer_norm"},
    {OpKind::kGatherRows, "gather_rows"},
    {OpKind::kConcat, "concat"},
    {OpKind::kSlice, "slice"},
    {OpKind::kSum, "sum"},
    {OpKind::kSumLastDim, "sum_lastdim"},
    {OpKind::kMean, "mean"},
    {OpKind::kTranspose, "transpose"},
    {OpKind::kReshape, "reshape"},
    {OpKind::kClampMin, "clamp_min"},
}};

std::optional<OpKind> g_corrupted;

const char* cname(OpKind kind) {
  for (const auto& [k, n] : kOpNames)
    if (k == kind) return n;
  return "?";
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Graph::current().enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b,
                              const std::string& what) {
  throw std::invalid_argument(std::string(cname(kind)) + ": " + what +
                              " (shapes " + to_string(a) + " and " +
                              to_string(b) + ")");
}

[[noreturn]] void shape_error(OpKind kind, const Shape& a,
                              const std::string& what) {
  throw std::invalid_argument(std::string(cname(kind)) + ": " + what +
                              " (shape " + to_string(a) + ")");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// grad[i % size] += contrib(i) for i in [0, n); plain elementwise when sizes
// agree.
template <typename F>
void accumulate(const ImplPtr& in, OpKind kind, std::size_t n, F&& contrib) {
  if (!in->requires_grad) return;
  in->ensure_grad();
  double* g = in->grad.data();
  const std::size_t ns = in->grad.size();
  const double f = g_corrupted == kind ? 1.5 : 1.0;
  if (ns == n) {
    if (f == 1.0) {
      for (std::size_t i = 0; i < n; ++i) g[i] += contrib(i);
    } else {
      for (std::size_t i = 0; i < n; ++i) g[i] += f * contrib(i);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) g[i % ns] += f * contrib(i);
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, OpKind kind, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  kn::map(x.values(), out, fwd);
  const bool rg = recording({&x});
  Tensor y(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record(cname(kind), y, [in, o, kind, deriv] {
      const double* g = o->grad.data();
      const double* xv = in->values.data();
      const double* yv = o->values.data();
      accumulate(in, kind, o->values.size(),
                 [&](std::size_t i) { return g[i] * deriv(xv[i], yv[i]); });
    });
  }
  return y;
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, OpKind kind, Binary op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool a_big = true;
  if (sa == sb || is_suffix(sb, sa)) {
    a_big = true;
  } else if (is_suffix(sa, sb)) {
    a_big = false;
  } else {
    shape_error(kind, sa, sb, "shape mismatch");
  }
  const Tensor& big = a_big ? a : b;
  std::vector<double> out(big.numel());
  switch (op) {
    case Binary::kAdd:
      kn::zip(big.values(), (a_big ? b : a).values(), out,
              [](double x, double y) { return x + y; });
      break;
    case Binary::kMul:
      kn::zip(big.values(), (a_big ? b : a).values(), out,
              [](double x, double y) { return x * y; });
      break;
    case Binary::kSub:
      if (a_big) {
        kn::zip(a.values(), b.values(), out,
                [](double x, double y) { return x - y; });
      } else {
        kn::zip(b.values(), a.values(), out,
                [](double x, double y) { return y - x; });
      }
      break;
  }
  const bool rg = recording({&a, &b});
  Tensor y(big.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr ia = a.impl();
    ImplPtr ib = b.impl();
    ImplPtr o = y.impl();
    Graph::current().record(cname(kind), y, [ia, ib, o, kind, op] {
      const std::size_t n = o->values.size();
      const double* g = o->grad.data();
      const std::size_t na = ia->values.size();
      const std::size_t nb = ib->values.size();
      switch (op) {
        case Binary::kAdd:
          accumulate(ia, kind, n, [&](std::size_t i) { return g[i]; });
          accumulate(ib, kind, n, [&](std::size_t i) { return g[i]; });
          break;
        case Binary::kSub:
          accumulate(ia, kind, n, [&](std::size_t i) { return g[i]; });
          accumulate(ib, kind, n, [&](std::size_t i) { return -g[i]; });
          break;
        case Binary::kMul: {
          const double* av = ia->values.data();
          const double* bv = ib->values.data();
          accumulate(ia, kind, n,
                     [&](std::size_t i) { return g[i] * bv[i % nb]; });
          accumulate(ib, kind, n,
                     [&](std::size_t i) { return g[i] * av[i % na]; });
          break;
        }
      }
    });
  }
  return y;
}

}  // namespace

std::string_view op_name(OpKind kind) { return cname(kind); }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (const auto& [k, n] : kOpNames)
    if (name == n) return k;
  return std::nullopt;
}

std::span<const OpKind> all_ops() {
  static const std::vector<OpKind> ops = [] {
    std::vector<OpKind> v;
    for (const auto& entry : kOpNames) v.push_back(entry.first);
    return v;
  }();
  return ops;
}

void testing::corrupt_derivative(std::optional<OpKind> kind) {
  g_corrupted = kind;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    shape_error(OpKind::kMatmul, sa, sb, "operands must have rank >= 2");
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t kb = sb[sb.size() - 2];
  const std::size_t n = sb.back();
  if (k != kb) shape_error(OpKind::kMatmul, sa, sb, "inner dimensions differ");
  const bool batched = sb.size() > 2;
  if (batched && (sb.size() != sa.size() ||
                  !std::equal(sa.begin(), sa.end() - 2, sb.begin()))) {
    shape_error(OpKind::kMatmul, sa, sb, "batch dimensions differ");
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape = sa;
  out_shape.back() = n;
  std::vector<double> out(batch * m * n);
  if (!batched) {
    kn::gemm({batch * m, n, k, false, false}, a.values(), b.values(), out);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      kn::gemm({m, n, k, false, false}, a.values().subspan(i * m * k, m * k),
               b.values().subspan(i * k * n, k * n),
               std::span<double>(out).subspan(i * m * n, m * n));
    }
  }
  const bool rg = recording({&a, &b});
  Tensor y(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr ia = a.impl();
    ImplPtr ib = b.impl();
    ImplPtr o = y.impl();
    Graph::current().record("matmul", y, [ia, ib, o, batch, m, n, k, batched] {
      const std::span<const double> g = o->grad;
      const std::span<const double> av = ia->values;
      const std::span<const double> bv = ib->values;
      if (ia->requires_grad) {
        std::vector<double> da(batch * m * k);
        if (!batched) {
          kn::gemm({batch * m, k, n, false, true}, g, bv, da);
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            kn::gemm({m, k, n, false, true}, g.subspan(i * m * n, m * n),
                     bv.subspan(i * k * n, k * n),
                     std::span<double>(da).subspan(i * m * k, m * k));
          }
        }
        accumulate(ia, OpKind::kMatmul, da.size(),
                   [&](std::size_t i) { return da[i]; });
      }
      if (ib->requires_grad) {
        std::vector<double> db(ib->values.size());
        if (!batched) {
          kn::gemm({k, n, batch * m, true, false}, av, g, db);
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            kn::gemm({k, n, m, true, false}, av.subspan(i * m * k, m * k),
                     g.subspan(i * m * n, m * n),
                     std::span<double>(db).subspan(i * k * n, k * n));
          }
        }
        accumulate(ib, OpKind::kMatmul, db.size(),
                   [&](std::size_t i) { return db[i]; });
      }
    });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, OpKind::kAdd, Binary::kAdd);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, OpKind::kSub, Binary::kSub);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, OpKind::kMul, Binary::kMul);
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, OpKind::kScale, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, OpKind::kAddScalar, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, OpKind::kTanh, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, OpKind::kRelu, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, OpKind::kSigmoid,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, OpKind::kSoftplus,
      [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, OpKind::kExp, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, OpKind::kLog, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(
      x, OpKind::kClampMin, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  kn::softmax_rows(rows, cols, x.values(), out);
  const bool rg = recording({&x});
  Tensor y(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record("softmax", y, [in, o, rows, cols] {
      std::vector<double> dx(o->values.size());
      const double* g = o->grad.data();
      const double* yv = o->values.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          dot += g[base + j] * yv[base + j];
        for (std::size_t j = 0; j < cols; ++j)
          dx[base + j] = yv[base + j] * (g[base + j] - dot);
      }
      accumulate(in, OpKind::kSoftmax, dx.size(),
                 [&](std::size_t i) { return dx[i]; });
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, double eps) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  std::vector<double> inv_std(rows);
  kn::layer_norm_rows(rows, cols, eps, x.values(), out, inv_std);
  const bool rg = recording({&x});
  Tensor y(x.shape(), std::move(out), rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record(
        "layer_norm", y, [in, o, rows, cols, inv_std = std::move(inv_std)] {
          std::vector<double> dx(o->values.size());
          const double* g = o->grad.data();
          const double* yv = o->values.data();
          const double inv_cols = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * cols;
            double mean_g = 0.0;
            double mean_gy = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              mean_g += g[base + j];
              mean_gy += g[base + j] * yv[base + j];
            }
            mean_g *= inv_cols;
            mean_gy *= inv_cols;
            for (std::size_t j = 0; j < cols; ++j) {
              dx[base + j] =
                  inv_std[r] * (g[base + j] - mean_g - yv[base + j] * mean_gy);
            }
          }
          accumulate(in, OpKind::kLayerNorm, dx.size(),
                     [&](std::size_t i) { return dx[i]; });
        });
  }
  return y;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  const Shape& st = table.shape();
  if (st.size() != 2) {
    shape_error(OpKind::kGatherRows, st, "table must be rank 2");
  }
  if (rows.empty()) {
    shape_error(OpKind::kGatherRows, st, "no rows requested");
  }
  const std::size_t width = st[1];
  std::vector<double> out(rows.size() * width);
  const auto tv = table.values();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= st[0]) {
      shape_error(OpKind::kGatherRows, st,
                  "row index " + std::to_string(rows[r]) + " out of range");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(rows[r] * width),
                width, out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  const bool rg = recording({&table});
  Tensor y({rows.size(), width}, std::move(out), rg);
  if (rg) {
    ImplPtr in = table.impl();
    ImplPtr o = y.impl();
    Graph::current().record(
        "gather_rows", y,
        [in, o, width, idx = std::vector<std::size_t>(rows.begin(), rows.end())] {
          in->ensure_grad();
          const double f = g_corrupted == OpKind::kGatherRows ? 1.5 : 1.0;
          for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t j = 0; j < width; ++j) {
              in->grad[idx[r] * width + j] += f * o->grad[r * width + j];
            }
          }
        });
  }
  return y;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) {
    throw std::invalid_argument("concat: no inputs");
  }
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) shape_error(OpKind::kConcat, s0, "axis out of range");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& sp = p.shape();
    bool ok = sp.size() == s0.size();
    for (std::size_t d = 0; ok && d < sp.size(); ++d) {
      if (d != axis && sp[d] != s0[d]) ok = false;
    }
    if (!ok) shape_error(OpKind::kConcat, s0, sp, "incompatible parts");
    total += sp[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<double> out(ad::numel(out_shape));
  const std::size_t out_row = total * inner;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    widths.push_back(w);
    offset += w;
    rg = rg || recording({&p});
  }
  Tensor y(std::move(out_shape), std::move(out), rg);
  if (rg) {
    std::vector<ImplPtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    ImplPtr o = y.impl();
    Graph::current().record("concat", y, [ins, o, widths, outer, out_row] {
      std::size_t off = 0;
      for (std::size_t i = 0; i < ins.size(); ++i) {
        const std::size_t w = widths[i];
        accumulate(ins[i], OpKind::kConcat, outer * w, [&](std::size_t idx) {
          return o->grad[(idx / w) * out_row + off + idx % w];
        });
        off += w;
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    shape_error(OpKind::kSlice, s,
                "invalid slice axis=" + std::to_string(axis) +
                    " start=" + std::to_string(start) +
                    " length=" + std::to_string(length));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t in_row = s[axis] * inner;
  const std::size_t w = length * inner;
  const std::size_t off = start * inner;
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * w);
  const auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(o * in_row + off), w,
                out.begin() + static_cast<std::ptrdiff_t>(o * w));
  }
  const bool rg = recording({&x});
  Tensor y(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record("slice", y, [in, o, outer, in_row, w, off] {
      in->ensure_grad();
      const double f = g_corrupted == OpKind::kSlice ? 1.5 : 1.0;
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < w; ++j) {
          in->grad[r * in_row + off + j] += f * o->grad[r * w + j];
        }
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  const bool rg = recording({&x});
  Tensor y({1}, {total}, rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record("sum", y, [in, o] {
      const double g = o->grad[0];
      accumulate(in, OpKind::kSum, in->values.size(),
                 [g](std::size_t) { return g; });
    });
  }
  return y;
}

Tensor sum_lastdim(const Tensor& x) {
  const Shape& s = x.shape();
  const std::size_t cols = s.back();
  const std::size_t rows = x.numel() / cols;
  Shape out_shape(s.begin(), s.end() - 1);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(rows, 0.0);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += xv[r * cols + j];
    out[r] = acc;
  }
  const bool rg = recording({&x});
  Tensor y(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record("sum_lastdim", y, [in, o, cols] {
      accumulate(in, OpKind::kSumLastDim, in->values.size(),
                 [&](std::size_t i) { return o->grad[i / cols]; });
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double n = static_cast<double>(x.numel());
  const bool rg = recording({&x});
  Tensor y({1}, {total / n}, rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record("mean", y, [in, o, n] {
      const double g = o->grad[0] / n;
      accumulate(in, OpKind::kMean, in->values.size(),
                 [g](std::size_t) { return g; });
    });
  }
  return y;
}

Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) shape_error(OpKind::kTranspose, s, "rank must be >= 2");
  const std::size_t rows = s[s.size() - 2];
  const std::size_t cols = s.back();
  const std::size_t batch = x.numel() / (rows * cols);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * rows * cols;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        out[base + c * rows + r] = xv[base + r * cols + c];
  }
  const bool rg = recording({&x});
  Tensor y(std::move(out_shape), std::move(out), rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record("transpose", y, [in, o, rows, cols] {
      const std::size_t plane = rows * cols;
      accumulate(in, OpKind::kTranspose, in->values.size(),
                 [&](std::size_t i) {
                   const std::size_t b = i / plane;
                   const std::size_t r = (i % plane) / cols;
                   const std::size_t c = i % cols;
                   return o->grad[b * plane + c * rows + r];
                 });
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (ad::numel(shape) != x.numel()) {
    shape_error(OpKind::kReshape, x.shape(), shape, "element count differs");
  }
  const bool rg = recording({&x});
  Tensor y(std::move(shape), std::vector<double>(x.values().begin(),
                                                 x.values().end()),
           rg);
  if (rg) {
    ImplPtr in = x.impl();
    ImplPtr o = y.impl();
    Graph::current().record("reshape", y, [in, o] {
      accumulate(in, OpKind::kReshape, in->values.size(),
                 [&](std::size_t i) { return o->grad[i]; });
    });
  }
  return y;
}

}  // namespace dodt::ad
