// SPDX-License-Identifier: Apache-2.0
#include "tailor/verify.hpp"

#include <cstring>
#include <map>
#include <set>

#include "tailor/checkpoint.hpp"
#include "tailor/errors.hpp"

namespace tailor {

namespace {

// Normalized view: fine-layout group states for every module the checkpoint
// contains (coarse checkpoints are re-sliced in memory).
struct LogicalState {
    CheckpointData data;
    GroupTable fine;
    std::map<int, GroupState> groups; // fine indices
};

LogicalState load_logical(const std::filesystem::path& dir) {
    LogicalState s{read_checkpoint(dir), {}, {}};
    s.fine = build_group_table(s.data.spec);
    if (s.data.table.grouping == Grouping::Fine) {
        s.groups = std::move(s.data.groups);
        return s;
    }
    OptimizerState coarse;
    coarse.reserve(s.data.groups.size());
    for (int g = 0; g < s.data.table.group_count(); ++g) coarse.push_back(std::move(s.data.groups.at(g)));
    OptimizerState fine = coarse_to_fine(s.data.spec, coarse, s.fine);
    for (int g = 0; g < s.fine.group_count(); ++g) s.groups.emplace(g, std::move(fine[static_cast<std::size_t>(g)]));
    return s;
}

std::optional<std::size_t> first_mismatch(const std::vector<float>& a, const std::vector<float>& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::memcmp(&a[i], &b[i], sizeof(float)) != 0) return i;
    return std::nullopt;
}

} // namespace

VerifyResult verify_checkpoints(const std::filesystem::path& a, const std::filesystem::path& b,
                                const std::optional<std::vector<ModuleId>>& modules) {
    LogicalState lhs = load_logical(a);
    LogicalState rhs = load_logical(b);
    if (!lhs.data.spec.same_geometry(rhs.data.spec))
        fail(ErrorKind::Geometry, "checkpoints have different model geometry and cannot be compared");

    std::vector<ModuleId> compare;
    if (modules) {
        compare = *modules;
        for (const auto& m : compare)
            if (!module_valid(lhs.data.spec, m))
                fail(ErrorKind::InvalidModule, "module '" + module_name(m) + "' is not in the model");
    } else {
        for (const auto& m : enumerate_modules(lhs.data.spec))
            if (lhs.data.manifest.contains(m) || rhs.data.manifest.contains(m)) compare.push_back(m);
    }

    VerifyResult result;
    result.compared = compare;
    auto diverge = [&](const std::string& what) {
        result.equal = false;
        result.first_divergence = what;
    };

    for (const auto& m : compare) {
        const std::string name = module_name(m);
        const bool in_a = lhs.data.manifest.contains(m);
        const bool in_b = rhs.data.manifest.contains(m);
        if (!in_a && !in_b) continue; // absent on both sides: nothing to compare
        if (in_a != in_b) {
            diverge("module '" + name + "' present only in " + (in_a ? a.string() : b.string()));
            return result;
        }
        for (const auto& decl : tensors_of(lhs.data.spec, m)) {
            const TensorEntry& ta = lhs.data.weights.at(decl.name);
            const TensorEntry& tb = rhs.data.weights.at(decl.name);
            if (ta.bytes != tb.bytes) {
                std::size_t at = 0;
                while (at < ta.bytes.size() && ta.bytes[at] == tb.bytes[at]) ++at;
                diverge("weight tensor '" + decl.name + "' differs at byte " + std::to_string(at));
                return result;
            }
        }
        for (int g : group_indices_for(lhs.fine, m)) {
            const GroupState& ga = lhs.groups.at(g);
            const GroupState& gb = rhs.groups.at(g);
            if (ga.hyper != gb.hyper) {
                diverge("group " + std::to_string(g) + " (module '" + name + "') hyperparams differ");
                return result;
            }
            const std::pair<const char*, const std::vector<float> GroupState::*> fields[] = {
                {"master", &GroupState::master},
                {"exp_avg", &GroupState::exp_avg},
                {"exp_avg_sq", &GroupState::exp_avg_sq},
            };
            for (const auto& [label, member] : fields) {
                if (auto at = first_mismatch(ga.*member, gb.*member)) {
                    diverge("group " + std::to_string(g) + " (module '" + name + "') " + label +
                            " differs at element " + std::to_string(*at));
                    return result;
                }
            }
        }
    }
    return result;
}

} // namespace tailor
