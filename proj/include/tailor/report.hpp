// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tailor {

/// Measured on-disk footprint of one checkpoint directory.
struct CheckpointSizes {
    std::int64_t step = 0;
    std::int64_t total_bytes = 0;         // every file in the directory
    std::int64_t weights_file_bytes = 0;  // model.weights
    std::int64_t optim_file_bytes = 0;    // all rank shard files
    std::int64_t optim_payload_bytes = 0; // shard tensor bytes, headers excluded
    std::int64_t sidecar_bytes = 0;       // the four JSON files

    double total_to_weights_ratio() const {
        return static_cast<double>(total_bytes) / static_cast<double>(weights_file_bytes);
    }
};

CheckpointSizes measure_checkpoint(const std::filesystem::path& dir);

/// Footprint of a run directory: its checkpoints only (log.jsonl is not
/// checkpoint storage and is excluded).
struct RunSizes {
    std::vector<CheckpointSizes> checkpoints; // ascending by step
    std::int64_t total_bytes = 0;
};

RunSizes measure_run(const std::filesystem::path& run_dir);

} // namespace tailor
