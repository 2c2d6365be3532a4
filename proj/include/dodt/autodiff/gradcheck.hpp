#pragma once

#include <functional>
#include <span>

#include "dodt/autodiff/tensor.hpp"

namespace dodt::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. Error per coordinate is |analytic - numeric| / max(1, |analytic|).
// `f` must be deterministic; `h` must lie in (0, 1e-2].
GradCheckResult finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
    double h = 1e-5);

// Same comparison for a loss closed over existing parameters. When
// `max_coords_per_param` is nonzero, that many coordinates per parameter are
// drawn with `rng`; otherwise every coordinate is checked.
GradCheckResult finite_diff_check_params(const std::function<Tensor()>& loss,
                                         std::span<Tensor> params, double h,
                                         std::size_t max_coords_per_param,
                                         Rng& rng);

}  // namespace dodt::ad
