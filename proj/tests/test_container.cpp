// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "tailor/container.hpp"
#include "tailor/errors.hpp"

using namespace tailor;
using tailor::test::TempDir;

namespace {

TensorContainer random_container(std::mt19937_64& rng, int tensors) {
    std::uniform_int_distribution<int> dim(1, 9);
    std::uniform_int_distribution<int> byte(0, 255);
    TensorContainer c;
    for (int i = 0; i < tensors; ++i) {
        const Dtype dtype = (rng() & 1) ? Dtype::F32 : Dtype::BF16;
        std::vector<std::int64_t> shape{dim(rng), dim(rng)};
        std::vector<std::uint8_t> bytes(static_cast<std::size_t>(shape[0] * shape[1]) * dtype_size(dtype));
        for (auto& b : bytes) b = static_cast<std::uint8_t>(byte(rng));
        c.add("tensor." + std::to_string(i) + ".weight", dtype, shape, std::move(bytes));
    }
    return c;
}

} // namespace

TEST_CASE("serialize/deserialize round trip") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        TensorContainer c = random_container(rng, 1 + static_cast<int>(rng() % 6));
        if (i % 2) c.metadata = {{"rank", "0"}, {"num_ranks", "4"}};
        const auto bytes = c.serialize();
        CHECK(static_cast<std::int64_t>(bytes.size()) == c.serialized_bytes());
        TensorContainer back = TensorContainer::deserialize(bytes, "test");
        CHECK(back.tensors.size() == c.tensors.size());
        CHECK(back.metadata == c.metadata);
        for (const auto& [name, entry] : c.tensors) {
            const TensorEntry& b = back.at(name);
            CHECK(b.dtype == entry.dtype);
            CHECK(b.shape == entry.shape);
            CHECK(b.bytes == entry.bytes);
        }
    }
}

TEST_CASE("equal logical content serializes to equal bytes") {
    std::mt19937_64 rng_a(9), rng_b(9);
    TensorContainer a = random_container(rng_a, 4);
    TensorContainer b = random_container(rng_b, 4);
    CHECK(a.serialize() == b.serialize());
}

TEST_CASE("payload starts on an 8-byte boundary") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 8; ++i) {
        TensorContainer c = random_container(rng, 1 + i);
        const auto bytes = c.serialize();
        std::uint64_t header_len = 0;
        for (int k = 0; k < 8; ++k) header_len |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(k)]) << (8 * k);
        CHECK((8 + header_len) % 8 == 0);
    }
}

TEST_CASE("tampering is caught") {
    std::mt19937_64 rng(17);
    TensorContainer c = random_container(rng, 3);
    auto bytes = c.serialize();

    SUBCASE("truncated payload") {
        bytes.pop_back();
        CHECK_THROWS_AS(TensorContainer::deserialize(bytes, "test"), TailorError);
    }
    SUBCASE("extended payload") {
        bytes.push_back(0);
        try {
            TensorContainer::deserialize(bytes, "test");
            CHECK(false);
        } catch (const TailorError& e) {
            CHECK(e.kind() == ErrorKind::CorruptContainer);
        }
    }
    SUBCASE("header length past end of file") {
        bytes[0] = 0xFF;
        bytes[1] = 0xFF;
        CHECK_THROWS_AS(TensorContainer::deserialize(bytes, "test"), TailorError);
    }
    SUBCASE("header is not JSON") {
        bytes[9] = '#';
        CHECK_THROWS_AS(TensorContainer::deserialize(bytes, "test"), TailorError);
    }
}

TEST_CASE("file round trip and missing-file error") {
    TempDir tmp;
    std::mt19937_64 rng(23);
    TensorContainer c = random_container(rng, 2);
    write_container(tmp.sub("a.bin"), c);
    TensorContainer back = read_container(tmp.sub("a.bin"));
    CHECK(back.serialize() == c.serialize());

    try {
        read_container(tmp.sub("nope.bin"));
        CHECK(false);
    } catch (const TailorError& e) {
        CHECK(e.kind() == ErrorKind::MissingArtifact);
    }
}

TEST_CASE("container_size_for predicts serialized size without payloads") {
    std::mt19937_64 rng(31);
    TensorContainer c = random_container(rng, 5);
    c.metadata = {{"rank", "2"}, {"num_ranks", "8"}};
    std::map<std::string, std::pair<Dtype, std::vector<std::int64_t>>> decls;
    for (const auto& [name, entry] : c.tensors) decls[name] = {entry.dtype, entry.shape};
    CHECK(container_size_for(decls, c.metadata) == c.serialized_bytes());
}

TEST_CASE("mismatched byte length is rejected at add time") {
    TensorContainer c;
    CHECK_THROWS_AS(c.add("x", Dtype::F32, {2, 2}, std::vector<std::uint8_t>(15)), TailorError);
    c.add("x", Dtype::F32, {2, 2}, std::vector<std::uint8_t>(16));
    CHECK_THROWS_AS(c.add("x", Dtype::F32, {2, 2}, std::vector<std::uint8_t>(16)), TailorError);
}
