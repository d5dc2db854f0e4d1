// SPDX-License-Identifier: Apache-2.0
#include "tailor/shard.hpp"

#include <algorithm>

#include "tailor/errors.hpp"

namespace tailor {

std::int64_t ShardGeometry::padded_length(std::int64_t true_length) const {
    if (num_ranks < 1) fail(ErrorKind::Geometry, "num_ranks must be >= 1");
    if (true_length < 0) fail(ErrorKind::Geometry, "negative group length");
    const std::int64_t n = num_ranks;
    return n * ((true_length + n - 1) / n);
}

std::int64_t ShardGeometry::shard_length(std::int64_t true_length) const {
    return padded_length(true_length) / num_ranks;
}

std::vector<std::vector<float>> shard_group(const std::vector<float>& values,
                                            const ShardGeometry& geom) {
    const auto true_length = static_cast<std::int64_t>(values.size());
    const std::int64_t chunk = geom.shard_length(true_length);

    std::vector<std::vector<float>> shards;
    shards.reserve(static_cast<std::size_t>(geom.num_ranks));
    for (int r = 0; r < geom.num_ranks; ++r) {
        std::vector<float> shard(static_cast<std::size_t>(chunk), 0.0f);
        const std::int64_t begin = r * chunk;
        const std::int64_t end = std::min(begin + chunk, true_length);
        if (end > begin)
            std::copy(values.begin() + begin, values.begin() + end, shard.begin());
        shards.push_back(std::move(shard));
    }
    return shards;
}

std::vector<float> unshard_group(const std::vector<std::vector<float>>& shards,
                                 std::int64_t true_length) {
    if (shards.empty()) fail(ErrorKind::Geometry, "no shards to reassemble");
    ShardGeometry geom{static_cast<int>(shards.size())};
    const std::int64_t chunk = geom.shard_length(true_length);
    for (const auto& s : shards)
        if (static_cast<std::int64_t>(s.size()) != chunk)
            fail(ErrorKind::Geometry, "shard length " + std::to_string(s.size()) +
                                          " does not match geometry chunk " + std::to_string(chunk));

    std::vector<float> values;
    values.reserve(static_cast<std::size_t>(geom.padded_length(true_length)));
    for (const auto& s : shards) values.insert(values.end(), s.begin(), s.end());
    values.resize(static_cast<std::size_t>(true_length));
    return values;
}

} // namespace tailor
