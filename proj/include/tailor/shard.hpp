// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace tailor {

/// Uniform contiguous-chunk sharding of one flattened group across N ranks.
/// The group is zero-padded to padded_length = N * ceil(true_length / N) and
/// rank r receives the r-th contiguous chunk of padded_length / N elements.
struct ShardGeometry {
    int num_ranks = 1;

    std::int64_t padded_length(std::int64_t true_length) const;
    std::int64_t shard_length(std::int64_t true_length) const;
};

/// Split `values` into num_ranks chunks, zero-padding the tail.
std::vector<std::vector<float>> shard_group(const std::vector<float>& values,
                                            const ShardGeometry& geom);

/// Reassemble a group from its rank chunks and drop the padding.
/// Chunk lengths must agree with the geometry (GeometryError otherwise).
std::vector<float> unshard_group(const std::vector<std::vector<float>>& shards,
                                 std::int64_t true_length);

} // namespace tailor
