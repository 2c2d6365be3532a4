#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dodt/autodiff/ops.hpp"

namespace dodt::ad {

struct OpCheck {
  OpKind kind;
  double worst_rel_error = 0.0;
  // Shape of the input that produced the worst error, e.g. "[3,4]x[4,2]".
  std::string worst_shapes;
  std::size_t trials = 0;
};

// Finite-difference check of every OpKind on `trials` seeded random shapes
// each. The scalar objective is sum(op(inputs) * w) for a fixed random w, and
// every differentiable input is checked.
std::vector<OpCheck> check_all_ops(std::size_t trials, std::uint64_t seed,
                                   double h = 1e-5);

}  // namespace dodt::ad
