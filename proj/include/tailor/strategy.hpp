// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tailor/groups.hpp"
#include "tailor/model.hpp"
#include "tailor/shard.hpp"

namespace tailor {

enum class StrategyKind { Full, Parity, Filter };

std::string strategy_kind_name(StrategyKind kind);
StrategyKind parse_strategy_kind(const std::string& name);

/// Checkpoint-selection schedule. `interval` is the number of training steps
/// between checkpoints; the filter parameters control how often the middle
/// layers and the large auxiliary modules ride along.
struct StrategyConfig {
    StrategyKind kind = StrategyKind::Full;
    int interval = 50;
    int head_count = 2;      // filter: always-saved leading layers
    int tail_count = 2;      // filter: always-saved trailing layers
    int sparse_multiple = 5; // filter: middle layers every sparse_multiple-th checkpoint

    bool operator==(const StrategyConfig&) const = default;
    void validate(const ModelSpec& spec) const;
};

/// Module set saved at checkpoint counter c (1-based: the first checkpoint,
/// written at step `interval`, has c = 1).
///
/// Full:   every module.
/// Parity: odd counters save the even-indexed layers plus lm_head and norm;
///         even counters save the odd-indexed layers plus embed_tokens. The
///         two sets are disjoint and cover the model.
/// Filter: every checkpoint saves the first head_count and last tail_count
///         layers plus norm. Every sparse_multiple-th checkpoint additionally
///         saves half of the middle layers and one large auxiliary module,
///         alternating: odd multiples take the lower half plus embed_tokens,
///         even multiples the upper half plus lm_head.
std::vector<ModuleId> modules_to_save(const StrategyConfig& cfg, const ModelSpec& spec,
                                      std::int64_t checkpoint_counter);

/// Analytic total byte count of a run's checkpoints: the exact per-module
/// payload costs plus a per-checkpoint metadata model, summed over counters
/// 1..num_checkpoints. Validated against measured runs in the test suite.
std::int64_t expected_run_bytes(const StrategyConfig& cfg, const ModelSpec& spec,
                                int num_checkpoints, const ShardGeometry& geom,
                                const AdamHyperparams& base_hyper);

} // namespace tailor
