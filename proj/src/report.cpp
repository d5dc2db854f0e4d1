// SPDX-License-Identifier: Apache-2.0
#include "tailor/report.hpp"

#include "tailor/checkpoint.hpp"
#include "tailor/container.hpp"
#include "tailor/errors.hpp"
#include "tailor/trainer.hpp"

namespace tailor {

namespace {

std::int64_t file_bytes(const std::filesystem::path& path) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) fail(ErrorKind::MissingArtifact, "cannot stat '" + path.string() + "': " + ec.message());
    return static_cast<std::int64_t>(size);
}

// Tensor payload size of a container file: everything after the header.
std::int64_t container_payload_bytes(const std::filesystem::path& path) {
    const auto data = read_file_bytes(path);
    if (data.size() < 8) fail(ErrorKind::CorruptContainer, path.string() + ": truncated header");
    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i) header_len |= static_cast<std::uint64_t>(data[static_cast<std::size_t>(i)]) << (8 * i);
    if (header_len > data.size() - 8) fail(ErrorKind::CorruptContainer, path.string() + ": bad header length");
    return static_cast<std::int64_t>(data.size() - 8 - header_len);
}

} // namespace

CheckpointSizes measure_checkpoint(const std::filesystem::path& dir) {
    const CheckpointSummary summary = read_checkpoint_summary(dir);

    CheckpointSizes sizes;
    sizes.step = summary.trainer.step;
    sizes.weights_file_bytes = file_bytes(weights_path(dir));
    for (int r = 0; r < summary.optim.num_ranks; ++r) {
        sizes.optim_file_bytes += file_bytes(shard_path(dir, r));
        sizes.optim_payload_bytes += container_payload_bytes(shard_path(dir, r));
    }
    for (const auto& p : {optim_meta_path(dir), config_path(dir), trainer_state_path(dir), manifest_path(dir)})
        sizes.sidecar_bytes += file_bytes(p);
    sizes.total_bytes = sizes.weights_file_bytes + sizes.optim_file_bytes + sizes.sidecar_bytes;
    return sizes;
}

RunSizes measure_run(const std::filesystem::path& run_dir) {
    RunSizes sizes;
    for (const auto& dir : list_checkpoints(run_dir)) {
        sizes.checkpoints.push_back(measure_checkpoint(dir));
        sizes.total_bytes += sizes.checkpoints.back().total_bytes;
    }
    return sizes;
}

} // namespace tailor
