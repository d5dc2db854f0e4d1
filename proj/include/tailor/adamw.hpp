// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "tailor/groups.hpp"

namespace tailor {

/// Step counter shared by all parameter groups; increments by exactly one
/// per apply_step. The first update runs with t = 1.
struct OptimizerStepCounter {
    std::int64_t t = 0;
};

/// One decoupled-weight-decay Adam update with bias correction over a single
/// group, in place:
///   m <- b1*m + (1-b1)*g
///   v <- b2*v + (1-b2)*g^2
///   w <- w - lr * ( (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps) + wd*w )
/// All elementwise arithmetic is FP32; scalar coefficients are evaluated in
/// FP64 and rounded to FP32 once per call, so results are bitwise
/// reproducible and independent of group partitioning.
///
/// Returns the sum of squared weight deltas (FP64, element order) for
/// logging.
double adamw_update_group(GroupState& state, std::span<const float> grad, std::int64_t t);

/// Update every group of `state` with its gradient and advance the counter.
/// Gradient lengths must match group lengths (GeometryError otherwise);
/// non-finite gradients raise NonFiniteError before any state is touched.
/// Returns the summed squared weight delta across groups.
double apply_step(OptimizerState& state, const std::vector<std::vector<float>>& grads,
                  OptimizerStepCounter& counter);

} // namespace tailor
