#include "dodt/autodiff/op_suite.hpp"

#include <cmath>
#include <functional>

#include "dodt/autodiff/gradcheck.hpp"

namespace dodt::ad {

namespace {

using Build = std::function<Tensor(const std::vector<Tensor>&)>;

struct Case {
  std::vector<Tensor> inputs;
  // Indices of inputs that are differentiable.
  std::vector<std::size_t> checked;
  Build build;
};

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Shape random_shape(Rng& rng, std::size_t min_rank, std::size_t max_rank) {
  Shape s(draw(rng, min_rank, max_rank));
  for (auto& d : s) d = draw(rng, 1, 4);
  return s;
}

// Normal samples pushed at least `gap` away from `kink`.
Tensor away_from(Shape shape, Rng& rng, double kink, double gap) {
  Tensor t = Tensor::randn(std::move(shape), rng);
  for (double& v : t.values_mut()) {
    if (std::abs(v - kink) < gap) v = kink + (v < kink ? -gap : gap);
  }
  return t;
}

Case make_case(OpKind kind, Rng& rng) {
  Case c;
  switch (kind) {
    case OpKind::kMatmul: {
      const std::size_t m = draw(rng, 1, 4), k = draw(rng, 1, 4),
                        n = draw(rng, 1, 4), b = draw(rng, 1, 3);
      switch (draw(rng, 0, 2)) {
        case 0:
          c.inputs = {Tensor::randn({m, k}, rng), Tensor::randn({k, n}, rng)};
          break;
        case 1:
          c.inputs = {Tensor::randn({b, m, k}, rng), Tensor::randn({k, n}, rng)};
          break;
        default:
          c.inputs = {Tensor::randn({b, m, k}, rng),
                      Tensor::randn({b, k, n}, rng)};
      }
      c.checked = {0, 1};
      c.build = [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); };
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      Shape big = random_shape(rng, 1, 3);
      Shape small = big;
      if (draw(rng, 0, 1) == 1 && big.size() > 1) {
        small.erase(small.begin(), small.begin() + static_cast<std::ptrdiff_t>(
                                                       draw(rng, 1, big.size() - 1)));
      }
      Tensor a = Tensor::randn(big, rng);
      Tensor b = Tensor::randn(small, rng);
      if (draw(rng, 0, 1) == 1) std::swap(a, b);
      c.inputs = {a, b};
      c.checked = {0, 1};
      c.build = [kind](const std::vector<Tensor>& in) {
        if (kind == OpKind::kAdd) return add(in[0], in[1]);
        if (kind == OpKind::kSub) return sub(in[0], in[1]);
        return mul(in[0], in[1]);
      };
      break;
    }
    case OpKind::kScale: {
      const double f = std::normal_distribution<double>(0.0, 2.0)(rng);
      c.inputs = {Tensor::randn(random_shape(rng, 1, 3), rng)};
      c.checked = {0};
      c.build = [f](const std::vector<Tensor>& in) { return scale(in[0], f); };
      break;
    }
    case OpKind::kAddScalar: {
      const double v = std::normal_distribution<double>(0.0, 2.0)(rng);
      c.inputs = {Tensor::randn(random_shape(rng, 1, 3), rng)};
      c.checked = {0};
      c.build = [v](const std::vector<Tensor>& in) { return add_scalar(in[0], v); };
      break;
    }
    case OpKind::kTanh:
    case OpKind::kSigmoid:
    case OpKind::kSoftplus:
    case OpKind::kExp: {
      c.inputs = {Tensor::randn(random_shape(rng, 1, 3), rng)};
      c.checked = {0};
      c.build = [kind](const std::vector<Tensor>& in) {
        if (kind == OpKind::kTanh) return tanh(in[0]);
        if (kind == OpKind::kSigmoid) return sigmoid(in[0]);
        if (kind == OpKind::kSoftplus) return softplus(in[0]);
        return exp(in[0]);
      };
      break;
    }
    case OpKind::kRelu: {
      c.inputs = {away_from(random_shape(rng, 1, 3), rng, 0.0, 1e-2)};
      c.checked = {0};
      c.build = [](const std::vector<Tensor>& in) { return relu(in[0]); };
      break;
    }
    case OpKind::kClampMin: {
      const double floor = std::normal_distribution<double>(0.0, 0.5)(rng);
      c.inputs = {away_from(random_shape(rng, 1, 3), rng, floor, 1e-2)};
      c.checked = {0};
      c.build = [floor](const std::vector<Tensor>& in) {
        return clamp_min(in[0], floor);
      };
      break;
    }
    case OpKind::kLog: {
      c.inputs = {Tensor::uniform(random_shape(rng, 1, 3), rng, 0.5, 2.0)};
      c.checked = {0};
      c.build = [](const std::vector<Tensor>& in) { return log(in[0]); };
      break;
    }
    case OpKind::kSoftmax:
    case OpKind::kLayerNorm: {
      Shape s = random_shape(rng, 1, 3);
      s.back() = draw(rng, 2, 5);
      c.inputs = {Tensor::randn(s, rng)};
      c.checked = {0};
      c.build = [kind](const std::vector<Tensor>& in) {
        return kind == OpKind::kSoftmax ? softmax(in[0]) : layer_norm(in[0]);
      };
      break;
    }
    case OpKind::kGatherRows: {
      const std::size_t v = draw(rng, 1, 5), d = draw(rng, 1, 4),
                        n = draw(rng, 1, 6);
      std::vector<std::size_t> rows(n);
      for (auto& r : rows) r = draw(rng, 0, v - 1);
      c.inputs = {Tensor::randn({v, d}, rng)};
      c.checked = {0};
      c.build = [rows](const std::vector<Tensor>& in) {
        return gather_rows(in[0], rows);
      };
      break;
    }
    case OpKind::kConcat: {
      const Shape base = random_shape(rng, 1, 3);
      const std::size_t axis = draw(rng, 0, base.size() - 1);
      const std::size_t parts = draw(rng, 2, 3);
      for (std::size_t i = 0; i < parts; ++i) {
        Shape s = base;
        s[axis] = draw(rng, 1, 3);
        c.inputs.push_back(Tensor::randn(s, rng));
        c.checked.push_back(i);
      }
      c.build = [axis](const std::vector<Tensor>& in) { return concat(in, axis); };
      break;
    }
    case OpKind::kSlice: {
      Shape s = random_shape(rng, 1, 3);
      const std::size_t axis = draw(rng, 0, s.size() - 1);
      s[axis] = draw(rng, 2, 5);
      const std::size_t start = draw(rng, 0, s[axis] - 1);
      const std::size_t len = draw(rng, 1, s[axis] - start);
      c.inputs = {Tensor::randn(s, rng)};
      c.checked = {0};
      c.build = [axis, start, len](const std::vector<Tensor>& in) {
        return slice(in[0], axis, start, len);
      };
      break;
    }
    case OpKind::kSum:
    case OpKind::kSumLastDim:
    case OpKind::kMean: {
      c.inputs = {Tensor::randn(random_shape(rng, 1, 3), rng)};
      c.checked = {0};
      c.build = [kind](const std::vector<Tensor>& in) {
        if (kind == OpKind::kSum) return sum(in[0]);
        if (kind == OpKind::kMean) return mean(in[0]);
        return sum_lastdim(in[0]);
      };
      break;
    }
    case OpKind::kTranspose: {
      c.inputs = {Tensor::randn(random_shape(rng, 2, 3), rng)};
      c.checked = {0};
      c.build = [](const std::vector<Tensor>& in) { return transpose(in[0]); };
      break;
    }
    case OpKind::kReshape: {
      const Shape s = random_shape(rng, 1, 3);
      c.inputs = {Tensor::randn(s, rng)};
      c.checked = {0};
      const Shape flat = {ad::numel(s)};
      c.build = [flat](const std::vector<Tensor>& in) {
        return reshape(in[0], flat);
      };
      break;
    }
  }
  return c;
}

std::string describe(const std::vector<Tensor>& inputs) {
  std::string out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i) out += 'x';
    out += to_string(inputs[i].shape());
  }
  return out;
}

}  // namespace

std::vector<OpCheck> check_all_ops(std::size_t trials, std::uint64_t seed,
                                   double h) {
  std::vector<OpCheck> report;
  for (OpKind kind : all_ops()) {
    OpCheck check{kind, 0.0, "", trials};
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(kind) * 1009ULL + t);
      Case c = make_case(kind, rng);
      Tensor weights;
      {
        NoGradGuard no_grad;
        weights = Tensor::randn(c.build(c.inputs).shape(), rng);
      }
      for (std::size_t idx : c.checked) {
        auto objective = [&](const Tensor& x) {
          std::vector<Tensor> in = c.inputs;
          in[idx] = x;
          return sum(mul(c.build(in), weights));
        };
        const GradCheckResult r = finite_diff_check(objective, c.inputs[idx], h);
        if (r.max_rel_error >= check.worst_rel_error) {
          check.worst_rel_error = r.max_rel_error;
          check.worst_shapes = describe(c.inputs);
        }
      }
    }
    report.push_back(check);
  }
  return report;
}

}  // namespace dodt::ad
