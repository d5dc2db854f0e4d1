// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tailor/model.hpp"

namespace tailor {

struct VerifyResult {
    bool equal = true;
    std::string first_divergence; // empty when equal
    std::vector<ModuleId> compared;
};

/// Compare two checkpoints module by module: weight tensor bytes, unsharded
/// FP32 optimizer state (bitwise) and per-group hyperparameters. Checkpoints
/// with different model geometry raise GeometryError; different rank counts
/// or group layouts are fine because the comparison is on logical state.
/// Without a filter, the union of both manifests is compared, and a module
/// present on only one side counts as a divergence.
VerifyResult verify_checkpoints(const std::filesystem::path& a, const std::filesystem::path& b,
                                const std::optional<std::vector<ModuleId>>& modules = std::nullopt);

} // namespace tailor
