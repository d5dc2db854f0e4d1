// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tailor/adamw.hpp"
#include "tailor/checkpoint.hpp"
#include "tailor/gradients.hpp"
#include "tailor/groups.hpp"
#include "tailor/strategy.hpp"

namespace tailor {

/// Configuration for one deterministic training run.
struct TrainRunConfig {
    ModelSpec spec;
    StrategyConfig strategy;
    int total_steps = 0;
    int num_ranks = 1;
    Grouping grouping = Grouping::Fine;
    AdamHyperparams hyper; // base hyperparams; weight_decay applies to decay groups

    void validate() const;
};

/// Final in-memory state of a run (alongside whatever was written to disk).
struct TrainResult {
    GroupTable table;
    OptimizerState state;
    TrainerMeta meta;
    std::vector<std::filesystem::path> checkpoints;
};

/// Advance `state` by one training step: synthesize gradients for `step`,
/// apply the AdamW update, bump the counter. Returns {grad_norm, update_norm}
/// (L2, accumulated in FP64 in canonical order). Bitwise deterministic.
std::pair<double, double> train_step(const ModelSpec& spec, const GroupTable& table,
                                     OptimizerState& state, OptimizerStepCounter& counter,
                                     const GradientSource& src, std::int64_t step);

/// Deterministic training loop with periodic (partial) checkpointing: runs
/// `total_steps` steps from a seeded initialization and writes a checkpoint
/// every `strategy.interval` steps into `out_dir`, plus a per-step
/// `log.jsonl`. The run directory is a pure function of the config.
TrainResult train(const TrainRunConfig& cfg, const std::filesystem::path& out_dir);

/// Resume from a complete checkpoint: FP32 masters are authoritative, the
/// step counter, optimizer t, strategy and seed come from the stored state.
/// Continues for `additional_steps`, writing new checkpoints into `out_dir`
/// (sources are never mutated). Partial checkpoints raise MissingModules.
TrainResult resume(const std::filesystem::path& checkpoint_dir, int additional_steps,
                   const std::filesystem::path& out_dir);

/// Truncate a run directory as if the process had died at `at_step`:
/// checkpoints after that step are removed (a checkpoint scheduled exactly
/// at `at_step` survives; its write completes before the failure), and
/// log.jsonl is cut at the same point.
void inject_failure(const std::filesystem::path& run_dir, std::int64_t at_step);

/// Checkpoint directories inside a run, ascending by step.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& run_dir);

} // namespace tailor
