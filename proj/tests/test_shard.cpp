// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <numeric>
#include <random>

#include "tailor/errors.hpp"
#include "tailor/shard.hpp"

using namespace tailor;

TEST_CASE("length 10 over 4 ranks: chunks of 3 with zero padding") {
    std::vector<float> v(10);
    std::iota(v.begin(), v.end(), 1.0f);
    auto shards = shard_group(v, ShardGeometry{4});
    REQUIRE(shards.size() == 4);
    for (const auto& s : shards) CHECK(s.size() == 3);
    CHECK(shards[0] == std::vector<float>{1, 2, 3});
    CHECK(shards[3] == std::vector<float>{10, 0, 0});
    CHECK(unshard_group(shards, 10) == v);
}

TEST_CASE("single rank is the identity, no padding") {
    std::vector<float> v{1, 2, 3, 4, 5};
    ShardGeometry geom{1};
    CHECK(geom.padded_length(5) == 5);
    auto shards = shard_group(v, geom);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0] == v);
}

TEST_CASE("shard/unshard round trip over sampled lengths and rank counts") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<float> dist(-10.0f, 10.0f);
    for (int n = 1; n <= 16; ++n) {
        for (std::int64_t length : {1, 2, 7, 63, 1000, 12345, 100000}) {
            std::vector<float> v(static_cast<std::size_t>(length));
            for (auto& x : v) x = dist(rng);
            const ShardGeometry geom{n};
            auto shards = shard_group(v, geom);
            CHECK(static_cast<std::int64_t>(shards.size()) * geom.shard_length(length) ==
                  geom.padded_length(length));
            CHECK(geom.padded_length(length) >= length);
            CHECK(unshard_group(shards, length) == v);
        }
    }
}

TEST_CASE("rank 1000 over 7 ranks round trips bitwise") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(1000);
    for (auto& x : v) x = dist(rng);
    CHECK(unshard_group(shard_group(v, ShardGeometry{7}), 1000) == v);
}

TEST_CASE("mismatched shard lengths are rejected") {
    std::vector<std::vector<float>> shards{{1, 2, 3}, {4, 5}};
    try {
        unshard_group(shards, 5);
        CHECK(false);
    } catch (const TailorError& e) {
        CHECK(e.kind() == ErrorKind::Geometry);
    }
}
