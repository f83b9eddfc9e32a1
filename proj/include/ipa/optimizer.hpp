#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ipa/autodiff.hpp"

namespace ipa {

struct AdamHyper {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment estimates, one pair per parameter in registration order.
struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> first;
  std::vector<Tensor> second;
};

// One bias-corrected Adam update from the gradients stored in `params`.
// Throws NumericError naming the parameter if a gradient is non-finite;
// nothing is modified in that case.
void adam_step(std::span<ad::Parameter> params, AdamState& state, const AdamHyper& hyper);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<ad::Parameter> params, double max_norm);

}  // namespace ipa
