#include "dodt/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dodt::ad {

namespace {

void check_step(double h) {
  if (!(h > 0.0 && h <= 1e-2)) {
    throw std::invalid_argument("finite_diff_check: step h must be in (0, 1e-2]");
  }
}

void record_coordinate(GradCheckResult& result, std::size_t index,
                       double analytic, double numeric) {
  const double err =
      std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  ++result.coordinates_checked;
  if (err > result.max_rel_error || result.coordinates_checked == 1) {
    result.max_rel_error = std::max(result.max_rel_error, err);
    result.worst_coordinate = index;
    result.analytic = analytic;
    result.numeric = numeric;
  }
}

}  // namespace

GradCheckResult finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  check_step(h);
  Graph::current().clear();
  Tensor leaf(x.shape(), std::vector<double>(x.values().begin(),
                                             x.values().end()),
              true);
  std::vector<double> analytic(x.numel(), 0.0);
  {
    Tensor loss = f(leaf);
    if (loss.requires_grad()) {
      backward(loss);
      if (leaf.has_grad()) {
        std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
      }
    }
    Graph::current().clear();
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  std::vector<double> probe(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = f(Tensor(x.shape(), probe)).item();
    probe[i] = original - h;
    const double down = f(Tensor(x.shape(), probe)).item();
    probe[i] = original;
    record_coordinate(result, i, analytic[i], (up - down) / (2.0 * h));
  }
  return result;
}

GradCheckResult finite_diff_check_params(const std::function<Tensor()>& loss,
                                         std::span<Tensor> params, double h,
                                         std::size_t max_coords_per_param,
                                         Rng& rng) {
  check_step(h);
  Graph::current().clear();
  for (Tensor& p : params) p.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tensor value = loss();
    if (value.requires_grad()) backward(value);
    Graph::current().clear();
    for (Tensor& p : params) {
      if (p.has_grad()) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
      } else {
        analytic.emplace_back(p.numel(), 0.0);
      }
      p.zero_grad();
    }
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  std::size_t flat_offset = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    auto w = p.values_mut();
    for (std::size_t c : coords) {
      const double original = w[c];
      w[c] = original + h;
      const double up = loss().item();
      w[c] = original - h;
      const double down = loss().item();
      w[c] = original;
      record_coordinate(result, flat_offset + c, analytic[pi][c],
                        (up - down) / (2.0 * h));
    }
    flat_offset += p.numel();
  }
  return result;
}

}  // namespace dodt::ad
