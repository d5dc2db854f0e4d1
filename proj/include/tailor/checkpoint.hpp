// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tailor/container.hpp"
#include "tailor/groups.hpp"
#include "tailor/model.hpp"
#include "tailor/shard.hpp"
#include "tailor/strategy.hpp"

namespace tailor {

/// Contents of trainer_state.json. `strategy` round-trips as a JSON object
/// under the fixed top-level key set {step, lr, optimizer_t, strategy,
/// checkpoint_counter, rng_seed}.
struct TrainerMeta {
    std::int64_t step = 0;
    double lr = kDefaultLr;
    std::int64_t optimizer_t = 0;
    StrategyConfig strategy;
    std::int64_t checkpoint_counter = 0;
    std::uint64_t rng_seed = 0;
};

struct ModuleProvenance {
    std::string source;
    std::int64_t step = 0;
};

/// Contents of manifest.json: which modules this (possibly partial)
/// checkpoint contains, at which step, under which strategy label. Merged
/// checkpoints additionally record per-module provenance.
struct SaveManifest {
    std::int64_t step = 0;
    std::string strategy = "full";
    std::vector<ModuleId> modules; // canonical model order
    std::map<std::string, ModuleProvenance> provenance;

    bool contains(const ModuleId& m) const;
    bool is_complete(const ModelSpec& spec) const;
};

/// One group's record in optim_meta.json.
struct OptimGroupMeta {
    int index = 0;
    std::string owner;            // module name, or "coarse" for the 2-group layout
    DecayClass decay = DecayClass::Decay;
    std::int64_t true_length = 0;
    std::int64_t padded_length = 0;
    std::int64_t shard_length = 0;
    AdamHyperparams hyper;
};

/// Contents of optim_meta.json: sharding geometry, optimizer step and the
/// per-group hyperparameters for every group stored in the shard files.
struct OptimMeta {
    Grouping grouping = Grouping::Fine;
    int num_ranks = 1;
    std::int64_t step = 0;
    std::vector<OptimGroupMeta> groups; // ascending by group index

    const OptimGroupMeta* find(int group_index) const;
};

/// A checkpoint directory fully loaded into memory: consolidated BF16
/// weights, unsharded FP32 optimizer groups, and the three metadata files.
struct CheckpointData {
    ModelSpec spec;
    TrainerMeta trainer;
    SaveManifest manifest;
    GroupTable table;               // layout matching optim_meta
    int num_ranks = 1;
    std::map<int, GroupState> groups; // only the groups of saved modules
    TensorContainer weights;          // only tensors of saved modules
};

// Fixed file layout inside a checkpoint directory.
std::string checkpoint_dir_name(std::int64_t step);
std::optional<std::int64_t> parse_checkpoint_dir_name(const std::string& name);
std::filesystem::path weights_path(const std::filesystem::path& dir);
std::filesystem::path shard_path(const std::filesystem::path& dir, int rank);
std::filesystem::path optim_meta_path(const std::filesystem::path& dir);
std::filesystem::path config_path(const std::filesystem::path& dir);
std::filesystem::path trainer_state_path(const std::filesystem::path& dir);
std::filesystem::path manifest_path(const std::filesystem::path& dir);

// JSON (de)serialization of the sidecar files. All JSON is pretty-printed
// with lexicographically sorted keys so equal state yields equal bytes.
std::string render_config_json(const ModelSpec& spec);
ModelSpec parse_config_json(const std::string& text, const std::string& origin);
std::string render_trainer_state_json(const TrainerMeta& meta);
TrainerMeta parse_trainer_state_json(const std::string& text, const std::string& origin);
std::string render_manifest_json(const SaveManifest& manifest);
SaveManifest parse_manifest_json(const std::string& text, const std::string& origin);
std::string render_optim_meta_json(const OptimMeta& meta);
OptimMeta parse_optim_meta_json(const std::string& text, const std::string& origin);

/// Build the optim_meta record for `groups` of `state` under geometry `geom`.
OptimMeta build_optim_meta(const GroupTable& table, const std::map<int, GroupState>& groups,
                           const ShardGeometry& geom, std::int64_t step);

/// Derive the BF16 weight container for the given modules from FP32 masters.
TensorContainer derive_weights(const ModelSpec& spec, const GroupTable& table,
                               const std::map<int, GroupState>& groups,
                               const std::vector<ModuleId>& modules);

/// Write a checkpoint directory. Every invariant is validated before the
/// first byte is written (ConsistencyError on violation, and nothing is
/// created); the resulting bytes are a pure function of the inputs.
void write_checkpoint(const std::filesystem::path& dir, const CheckpointData& data);

/// Read and validate a checkpoint directory; inverse of write_checkpoint.
CheckpointData read_checkpoint(const std::filesystem::path& dir);

/// Metadata-only view of a checkpoint (no tensor payloads).
struct CheckpointSummary {
    std::filesystem::path dir;
    ModelSpec spec;
    TrainerMeta trainer;
    SaveManifest manifest;
    OptimMeta optim;
};

CheckpointSummary read_checkpoint_summary(const std::filesystem::path& dir);

/// Group states keyed by canonical group index for a set of modules.
std::vector<int> group_indices_for_modules(const GroupTable& table,
                                           const std::vector<ModuleId>& modules);

} // namespace tailor
