#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gksa/numerics/graph.hpp"

namespace gksa {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment accumulators, index-aligned with the parameter list
// handed to adam_step.
struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(std::span<Parameter* const> params);

// One bias-corrected adaptive-moment update. Leaves grads untouched; the
// caller zeroes them. ConfigError if lr <= 0.
void adam_step(std::span<Parameter* const> params, OptimizerState& state, double lr,
               const AdamConfig& cfg = {});

// Rescales all grads so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace gksa
