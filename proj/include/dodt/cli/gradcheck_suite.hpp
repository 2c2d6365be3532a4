#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dodt::cli {

struct GradCheckLine {
  std::string category;  // "op" or "composite"
  std::string name;
  double worst_rel_error = 0.0;
  std::string detail;  // shapes of the worst case
  double tolerance = 0.0;
  bool passed() const { return worst_rel_error <= tolerance; }
};

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kCompositeTolerance = 1e-3;

// Every autodiff op on `trials` seeded shapes, then the world-model loss, the
// actor and value losses over an imagined rollout, and the transformer NLL.
std::vector<GradCheckLine> run_gradcheck_suite(std::size_t trials, std::uint64_t seed);

// One line per check plus a summary; returns true iff all passed.
bool report_gradcheck(std::ostream& out, const std::vector<GradCheckLine>& lines);

}  // namespace dodt::cli
