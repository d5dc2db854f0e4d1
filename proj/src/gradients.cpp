// SPDX-License-Identifier: Apache-2.0
#include "tailor/gradients.hpp"

#include "tailor/errors.hpp"

namespace tailor {

std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

float unit_noise(std::uint64_t seed, std::int64_t step, std::int64_t element_id) {
    std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ULL);
    h = mix64(h ^ (static_cast<std::uint64_t>(step) * 0xD1B54A32D192ED03ULL));
    h = mix64(h ^ (static_cast<std::uint64_t>(element_id) * 0x8CB92BA72F3D8DD7ULL));
    const double unit = static_cast<double>(h >> 11) * 0x1.0p-53; // [0, 1)
    return static_cast<float>(2.0 * unit - 1.0);
}

std::vector<std::vector<float>> synth_grad(const GradientSource& src, std::int64_t step,
                                           const ModelSpec& spec, const GroupTable& table,
                                           const OptimizerState& state) {
    if (static_cast<int>(state.size()) != table.group_count())
        fail(ErrorKind::Geometry, "state group count does not match the table");

    std::vector<std::vector<float>> grads;
    grads.reserve(state.size());
    for (int g = 0; g < table.group_count(); ++g) {
        const GroupState& group = state[static_cast<std::size_t>(g)];
        if (group.length() != table.groups[static_cast<std::size_t>(g)].element_count)
            fail(ErrorKind::Geometry, "group " + std::to_string(g) + " length does not match the table");
        std::vector<float> grad(static_cast<std::size_t>(group.length()));
        for (const auto& slice : group_tensor_slices(spec, table, g)) {
            const auto n = slice.decl.element_count();
            for (std::int64_t i = 0; i < n; ++i) {
                const auto at = static_cast<std::size_t>(slice.group_offset + i);
                const float u = unit_noise(src.seed, step, slice.model_offset + i);
                grad[at] = src.state_coeff * group.master[at] + src.noise_coeff * u;
            }
        }
        grads.push_back(std::move(grad));
    }
    return grads;
}

OptimizerState init_state(const ModelSpec& spec, const GroupTable& table,
                          const AdamHyperparams& base, std::uint64_t seed) {
    OptimizerState state = zero_state(spec, table, base);
    constexpr float init_scale = 0.02f;
    for (int g = 0; g < table.group_count(); ++g) {
        GroupState& group = state[static_cast<std::size_t>(g)];
        for (const auto& slice : group_tensor_slices(spec, table, g)) {
            const auto n = slice.decl.element_count();
            for (std::int64_t i = 0; i < n; ++i) {
                const auto at = static_cast<std::size_t>(slice.group_offset + i);
                group.master[at] = init_scale * unit_noise(seed, 0, slice.model_offset + i);
            }
        }
    }
    return state;
}

} // namespace tailor
