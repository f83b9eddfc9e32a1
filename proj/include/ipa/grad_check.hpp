#pragma once

#include <functional>
#include <span>
#include <string>

#include "ipa/autodiff.hpp"

namespace ipa::ad {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t elements_checked = 0;
};

// Compares backward() against central differences for every element of
// `params`, evaluated at their current values. The per-element error is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
//
// `loss` must rebuild the scalar loss from the parameters on each call.
// Throws ContractError if epsilon is outside [1e-7, 1e-3] and NumericError if
// any evaluation is non-finite. Parameter gradients are left zeroed.
GradCheckReport grad_check(const std::function<Var()>& loss, std::span<Parameter> params,
                           double epsilon = 1e-5);

}  // namespace ipa::ad
