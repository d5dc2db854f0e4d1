// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "tailor/groups.hpp"
#include "tailor/model.hpp"

namespace tailor {

/// Stateless synthetic gradient source standing in for backpropagation.
/// For element e of the flattened model at training step s:
///   g[e] = c1 * w[e] + c2 * u(seed, s, e)
/// where u is a counter-hash mapped uniformly onto [-1, 1). The output
/// depends only on (seed, step, global element id, current master value),
/// so it is bitwise reproducible and identical across group layouts. The
/// state-feedback term makes trajectories from different starting points
/// genuinely diverge, which keeps merged-state fidelity tests meaningful.
struct GradientSource {
    std::uint64_t seed = 0;
    float state_coeff = 0.05f; // c1
    float noise_coeff = 0.01f; // c2
};

/// SplitMix64-style finalizer used by the counter hash.
std::uint64_t mix64(std::uint64_t z);

/// Uniform draw on [-1, 1) for one (seed, step, global element id) triple.
float unit_noise(std::uint64_t seed, std::int64_t step, std::int64_t element_id);

/// Per-group gradients for one step, in table group order.
std::vector<std::vector<float>> synth_grad(const GradientSource& src, std::int64_t step,
                                           const ModelSpec& spec, const GroupTable& table,
                                           const OptimizerState& state);

/// Deterministic master-weight initialization: w[e] = 0.02 * u(seed, 0, e).
/// Step 0 is reserved for initialization; gradient steps start at 1.
OptimizerState init_state(const ModelSpec& spec, const GroupTable& table,
                          const AdamHyperparams& base, std::uint64_t seed);

} // namespace tailor
