// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tailor/checkpoint.hpp"
#include "tailor/model.hpp"
#include "tailor/recipe.hpp"

namespace tailor {

/// A fully resolved merge: every module of the target model mapped to one
/// source checkpoint, expanded to the per-group copy list.
struct MergePlan {
    ModelSpec spec; // shared geometry; seed taken from the config source
    int num_ranks = 1;
    GroupTable table; // fine canonical table of the target

    struct Assignment {
        std::string source;     // checkpoint path
        ModuleId source_module; // module to read there
        std::int64_t source_step = 0;
    };
    std::map<ModuleId, Assignment> assignment; // keyed by target module

    struct GroupCopy {
        std::string source;
        int source_group = 0;
        int target_group = 0;
    };
    std::vector<GroupCopy> group_copies; // ascending by target group, covers all

    std::string config_source; // resolved path
    std::vector<std::string> sources; // distinct source paths, deterministic order
};

/// Resolve a recipe against the source checkpoints on disk. Validates
/// geometry agreement, full coverage, target uniqueness and per-source
/// module availability; never writes anything.
MergePlan resolve_plan(const MergeRecipe& recipe);

struct MergeOptions {
    int workers = 0;       // parallel shard loads; 0 means num_ranks
    bool uncached = false; // reload source shard files per group copy
};

struct MergeStats {
    std::int64_t shard_files_read = 0;
    std::int64_t weight_files_read = 0;
    double wall_ms = 0.0;
};

/// Assemble the composite checkpoint described by `plan` into `out_dir`:
/// passthrough-copied weight tensors, byte-identical optimizer shard slices,
/// per-group hyperparameters from each module's source, and config files
/// copied from the resolved config source. All validation happens before the
/// first write; the output is re-read and checked against every checkpoint
/// invariant before returning. Output bytes do not depend on `workers`.
MergeStats execute_merge(const MergePlan& plan, const std::filesystem::path& out_dir,
                         const MergeOptions& options = {});

/// Auto-generate a recipe from the manifests of a run directory: every
/// module is drawn from the newest checkpoint at or before `failure_step`
/// that contains it; the newest such checkpoint overall becomes both the
/// base and the config source. Modules never saved raise UnrecoverableModule.
MergeRecipe recipe_from_manifests(const std::filesystem::path& run_dir, std::int64_t failure_step);

} // namespace tailor
