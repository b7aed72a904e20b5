#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vgseg/autodiff/tape.hpp"

namespace vgseg::ad {

// Builds the scalar loss on `tape` from the differentiable inputs. Parameters
// taken from a store must be fetched with tape.param() inside the function.
using CheckFn = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "input 0[12]" or "param name[3]"
  std::size_t checked = 0;
  std::size_t retried = 0;  // entries re-differenced with eps / 100
};

// Central differences (f(x+eps) - f(x-eps)) / 2eps against tape gradients for
// every element of every input and of every parameter in `params`.
// Relative error uses max(|a|, |b|, 1e-8) as denominator. An entry that
// disagrees is differenced again with eps / 100 and keeps the smaller error.
GradCheckResult grad_check(const CheckFn& fn, std::vector<Tensor<double>> inputs,
                           ParameterStore<double>* params = nullptr, double eps = 1e-3);

}  // namespace vgseg::ad
