// SPDX-License-Identifier: Apache-2.0
#include "tailor/adamw.hpp"

#include <cmath>

#include "tailor/errors.hpp"

namespace tailor {

double adamw_update_group(GroupState& state, std::span<const float> grad, std::int64_t t) {
    if (static_cast<std::int64_t>(grad.size()) != state.length())
        fail(ErrorKind::Geometry, "gradient length " + std::to_string(grad.size()) +
                                      " does not match group length " + std::to_string(state.length()));
    if (t < 1) fail(ErrorKind::Geometry, "optimizer step count must be >= 1");

    const AdamHyperparams& h = state.hyper;
    // Coefficients in FP64, rounded to FP32 once; the elementwise loop is
    // pure FP32 so the result is independent of how elements are grouped.
    const float b1 = static_cast<float>(h.beta1);
    const float one_minus_b1 = static_cast<float>(1.0 - h.beta1);
    const float b2 = static_cast<float>(h.beta2);
    const float one_minus_b2 = static_cast<float>(1.0 - h.beta2);
    const float bias1 = static_cast<float>(1.0 - std::pow(h.beta1, static_cast<double>(t)));
    const float bias2 = static_cast<float>(1.0 - std::pow(h.beta2, static_cast<double>(t)));
    const float lr = static_cast<float>(h.lr);
    const float eps = static_cast<float>(h.eps);
    const float wd = static_cast<float>(h.weight_decay);

    float* w = state.master.data();
    float* m = state.exp_avg.data();
    float* v = state.exp_avg_sq.data();
    const std::size_t n = grad.size();

    double delta_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const float g = grad[i];
        m[i] = b1 * m[i] + one_minus_b1 * g;
        v[i] = b2 * v[i] + one_minus_b2 * (g * g);
        const float m_hat = m[i] / bias1;
        const float v_hat = v[i] / bias2;
        const float update = m_hat / (std::sqrt(v_hat) + eps) + wd * w[i];
        const float step = lr * update;
        w[i] = w[i] - step;
        delta_sq += static_cast<double>(step) * static_cast<double>(step);
    }
    return delta_sq;
}

double apply_step(OptimizerState& state, const std::vector<std::vector<float>>& grads,
                  OptimizerStepCounter& counter) {
    if (grads.size() != state.size())
        fail(ErrorKind::Geometry, "gradient group count does not match state group count");
    for (std::size_t g = 0; g < state.size(); ++g) {
        if (static_cast<std::int64_t>(grads[g].size()) != state[g].length())
            fail(ErrorKind::Geometry, "gradient length mismatch in group " + std::to_string(g));
        for (float x : grads[g])
            if (!std::isfinite(x))
                fail(ErrorKind::NonFinite, "non-finite gradient in group " + std::to_string(g));
    }

    counter.t += 1;
    double delta_sq = 0.0;
    for (std::size_t g = 0; g < state.size(); ++g)
        delta_sq += adamw_update_group(state[g], grads[g], counter.t);
    return delta_sq;
}

} // namespace tailor
