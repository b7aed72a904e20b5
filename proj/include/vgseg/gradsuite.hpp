#pragma once

#include <string>
#include <vector>

namespace vgseg {

inline constexpr double kGradTolerance = 1e-5;

struct GradCase {
  std::string name;
  int seed = 0;
  double eps = 0.0;
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t retried = 0;

  [[nodiscard]] bool passed() const { return max_rel_error < kGradTolerance; }
};

// Finite-difference checks in double precision for every autodiff op and the
// graph/fusion blocks built on them, once per seed in [0, seeds).
std::vector<GradCase> run_gradient_suite(int seeds = 3);

}  // namespace vgseg
