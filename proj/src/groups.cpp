// SPDX-License-Identifier: Apache-2.0
#include "tailor/groups.hpp"

#include <algorithm>

#include "tailor/errors.hpp"

namespace tailor {

void AdamHyperparams::validate() const {
    if (!(lr > 0)) fail(ErrorKind::Geometry, "lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
        fail(ErrorKind::Geometry, "beta coefficients must lie in [0, 1)");
    if (!(eps > 0)) fail(ErrorKind::Geometry, "eps must be > 0");
    if (!(weight_decay >= 0)) fail(ErrorKind::Geometry, "weight_decay must be >= 0");
}

GroupState GroupState::zeros(std::int64_t n, const AdamHyperparams& hyper) {
    GroupState s;
    s.master.assign(static_cast<std::size_t>(n), 0.0f);
    s.exp_avg.assign(static_cast<std::size_t>(n), 0.0f);
    s.exp_avg_sq.assign(static_cast<std::size_t>(n), 0.0f);
    s.hyper = hyper;
    return s;
}

void GroupState::validate() const {
    if (master.size() != exp_avg.size() || master.size() != exp_avg_sq.size())
        fail(ErrorKind::Geometry, "group state vectors have mismatched lengths");
    for (float v : exp_avg_sq)
        if (!(v >= 0.0f)) fail(ErrorKind::Consistency, "exp_avg_sq contains a negative or non-finite element");
}

std::int64_t GroupTable::total_elements() const {
    std::int64_t n = 0;
    for (const auto& g : groups) n += g.element_count;
    return n;
}

GroupTable build_group_table(const ModelSpec& spec) {
    spec.validate();
    GroupTable table;
    table.grouping = Grouping::Fine;
    table.num_layers = spec.num_layers;
    table.weight_tied = spec.weight_tied;

    auto push = [&](const ModuleId& owner, DecayClass decay) {
        GroupInfo g;
        g.index = table.group_count();
        g.owner = owner;
        g.decay = decay;
        g.element_count = module_class_elements(spec, owner, decay);
        table.groups.push_back(std::move(g));
    };

    push(ModuleId::norm(), DecayClass::NoDecay);
    for (int i = 0; i < spec.num_layers; ++i)
        push(ModuleId::transformer_layer(i), DecayClass::NoDecay);
    push(ModuleId::embed_tokens(), DecayClass::Decay);
    if (!spec.weight_tied) push(ModuleId::lm_head(), DecayClass::Decay);
    for (int i = 0; i < spec.num_layers; ++i)
        push(ModuleId::transformer_layer(i), DecayClass::Decay);
    return table;
}

GroupTable build_coarse_table(const ModelSpec& spec) {
    spec.validate();
    GroupTable table;
    table.grouping = Grouping::Coarse;
    table.num_layers = spec.num_layers;
    table.weight_tied = spec.weight_tied;

    std::int64_t no_decay = 0;
    std::int64_t decay = 0;
    for (const auto& m : enumerate_modules(spec)) {
        no_decay += module_class_elements(spec, m, DecayClass::NoDecay);
        decay += module_class_elements(spec, m, DecayClass::Decay);
    }
    table.groups.push_back({0, std::nullopt, DecayClass::NoDecay, no_decay});
    table.groups.push_back({1, std::nullopt, DecayClass::Decay, decay});
    return table;
}

std::vector<int> group_indices_for(const GroupTable& table, const ModuleId& m) {
    if (table.grouping != Grouping::Fine)
        fail(ErrorKind::Geometry, "per-module group lookup requires the fine layout");
    if (m.kind == ModuleKind::LmHead && table.weight_tied)
        fail(ErrorKind::InvalidModule, "lm_head does not exist in a weight-tied model");

    const int L = table.num_layers;
    switch (m.kind) {
        case ModuleKind::Norm: return {0};
        case ModuleKind::EmbedTokens: return {L + 1};
        case ModuleKind::LmHead: return {L + 2};
        case ModuleKind::TransformerLayer: {
            if (m.layer < 0 || m.layer >= L)
                fail(ErrorKind::InvalidModule, "layer index out of range: " + std::to_string(m.layer));
            const int decay_base = table.weight_tied ? L + 2 : L + 3;
            return {1 + m.layer, decay_base + m.layer};
        }
    }
    fail(ErrorKind::InvalidModule, "unknown module kind");
}

std::vector<TensorSlice> group_tensor_slices(const ModelSpec& spec, const GroupTable& table,
                                             int group_index) {
    if (group_index < 0 || group_index >= table.group_count())
        fail(ErrorKind::Geometry, "group index out of range: " + std::to_string(group_index));
    const GroupInfo& info = table.groups[static_cast<std::size_t>(group_index)];

    std::vector<TensorSlice> slices;
    std::int64_t group_offset = 0;
    auto append_module = [&](const ModuleId& m) {
        std::int64_t within = 0;
        const std::int64_t base = module_model_offset(spec, m);
        for (const auto& t : tensors_of(spec, m)) {
            if (t.decay == info.decay) {
                slices.push_back({t, group_offset, base + within});
                group_offset += t.element_count();
            }
            within += t.element_count();
        }
    };

    if (info.owner) {
        append_module(*info.owner);
    } else {
        for (const auto& m : enumerate_modules(spec)) append_module(m);
    }
    if (group_offset != info.element_count)
        fail(ErrorKind::Consistency, "group tensor slices do not tile the group");
    return slices;
}

AdamHyperparams hyper_for_class(const AdamHyperparams& base, DecayClass decay) {
    AdamHyperparams h = base;
    if (decay == DecayClass::NoDecay) h.weight_decay = 0.0;
    return h;
}

OptimizerState zero_state(const ModelSpec& spec, const GroupTable& table,
                          const AdamHyperparams& base) {
    spec.validate();
    base.validate();
    OptimizerState state;
    state.reserve(table.groups.size());
    for (const auto& g : table.groups)
        state.push_back(GroupState::zeros(g.element_count, hyper_for_class(base, g.decay)));
    return state;
}

namespace {

// Copies every tensor slice of `src_table` state into its position under
// `dst_table`. Both tables must describe the same model.
OptimizerState reslice(const ModelSpec& spec, const OptimizerState& src,
                       const GroupTable& src_table, const GroupTable& dst_table) {
    if (static_cast<int>(src.size()) != src_table.group_count())
        fail(ErrorKind::Geometry, "state size does not match source table");
    for (int g = 0; g < src_table.group_count(); ++g)
        if (src[static_cast<std::size_t>(g)].length() != src_table.groups[static_cast<std::size_t>(g)].element_count)
            fail(ErrorKind::Geometry, "group " + std::to_string(g) + " length does not match table");

    // model_offset -> (source group, offset within it), per decay class.
    struct Placement {
        int group;
        std::int64_t offset;
    };
    std::vector<std::pair<std::int64_t, Placement>> by_model_offset;
    for (int g = 0; g < src_table.group_count(); ++g)
        for (const auto& s : group_tensor_slices(spec, src_table, g))
            by_model_offset.emplace_back(s.model_offset, Placement{g, s.group_offset});
    std::sort(by_model_offset.begin(), by_model_offset.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    auto locate = [&](std::int64_t model_offset) -> Placement {
        auto it = std::lower_bound(by_model_offset.begin(), by_model_offset.end(), model_offset,
                                   [](const auto& a, std::int64_t v) { return a.first < v; });
        if (it == by_model_offset.end() || it->first != model_offset)
            fail(ErrorKind::Consistency, "tensor placement missing in source layout");
        return it->second;
    };

    OptimizerState dst;
    dst.reserve(dst_table.groups.size());
    for (int g = 0; g < dst_table.group_count(); ++g) {
        const GroupInfo& info = dst_table.groups[static_cast<std::size_t>(g)];
        GroupState out = GroupState::zeros(info.element_count, AdamHyperparams{});
        bool hyper_set = false;
        for (const auto& s : group_tensor_slices(spec, dst_table, g)) {
            const Placement p = locate(s.model_offset);
            const GroupState& in = src[static_cast<std::size_t>(p.group)];
            if (!hyper_set) {
                out.hyper = hyper_for_class(in.hyper, info.decay);
                hyper_set = true;
            } else if (out.hyper != hyper_for_class(in.hyper, info.decay)) {
                fail(ErrorKind::Geometry, "conflicting hyperparams while re-slicing group " + std::to_string(g));
            }
            const auto n = static_cast<std::size_t>(s.decl.element_count());
            const auto src_at = static_cast<std::size_t>(p.offset);
            const auto dst_at = static_cast<std::size_t>(s.group_offset);
            std::copy_n(in.master.begin() + src_at, n, out.master.begin() + dst_at);
            std::copy_n(in.exp_avg.begin() + src_at, n, out.exp_avg.begin() + dst_at);
            std::copy_n(in.exp_avg_sq.begin() + src_at, n, out.exp_avg_sq.begin() + dst_at);
        }
        dst.push_back(std::move(out));
    }
    return dst;
}

} // namespace

OptimizerState coarse_to_fine(const ModelSpec& spec, const OptimizerState& coarse,
                              const GroupTable& fine_table) {
    return reslice(spec, coarse, build_coarse_table(spec), fine_table);
}

OptimizerState fine_to_coarse(const ModelSpec& spec, const OptimizerState& fine,
                              const GroupTable& fine_table) {
    return reslice(spec, fine, fine_table, build_coarse_table(spec));
}

} // namespace tailor
