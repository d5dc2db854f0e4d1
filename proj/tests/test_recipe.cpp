// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "tailor/errors.hpp"
#include "tailor/recipe.hpp"

using namespace tailor;

namespace {

ErrorKind recipe_error(const std::string& yaml) {
    try {
        parse_recipe(yaml);
    } catch (const TailorError& e) {
        return e.kind();
    }
    FAIL("expected a TailorError");
    return ErrorKind::Consistency;
}

} // namespace

TEST_CASE("parity recipe parses into two slices and three aux entries") {
    const std::string yaml = R"(
merge_method: passthrough
num_ranks: 4
slices:
  - source: ckpt-100
    layers: [0, 2]
  - source: ckpt-200
    layers: [1, 3]
aux:
  embed_tokens: ckpt-100
  norm: ckpt-200
  lm_head: ckpt-200
config_from: ckpt-200
)";
    const MergeRecipe recipe = parse_recipe(yaml);
    CHECK(recipe.num_ranks == 4);
    REQUIRE(recipe.slices.size() == 2);
    CHECK(recipe.slices[0].source == "ckpt-100");
    CHECK(recipe.slices[0].layers == std::vector<int>{0, 2});
    CHECK(recipe.slices[0].targets == std::vector<int>{0, 2});
    CHECK(recipe.aux.size() == 3);
    CHECK(recipe.aux.at("embed_tokens") == "ckpt-100");
    CHECK(recipe.config_from == "ckpt-200");
    CHECK(recipe.base_checkpoint.empty());
}

TEST_CASE("base-only recipe is valid and defaults config_from to latest") {
    const MergeRecipe recipe = parse_recipe("merge_method: passthrough\nbase_checkpoint: c\nnum_ranks: 1\n");
    CHECK(recipe.base_checkpoint == "c");
    CHECK(recipe.slices.empty());
    CHECK(recipe.config_from == "latest");
}

TEST_CASE("layer ranges are half-open") {
    const MergeRecipe recipe = parse_recipe(R"(
merge_method: passthrough
num_ranks: 2
slices:
  - source: c
    layers: {start: 1, end: 4}
)");
    CHECK(recipe.slices[0].layers == std::vector<int>{1, 2, 3});
}

TEST_CASE("explicit targets reposition layers") {
    const MergeRecipe recipe = parse_recipe(R"(
merge_method: passthrough
num_ranks: 2
slices:
  - source: c
    layers: [0, 1]
    targets: [2, 3]
)");
    CHECK(recipe.slices[0].targets == std::vector<int>{2, 3});
}

TEST_CASE("schema violations name the offending field") {
    CHECK(recipe_error("merge_method: passthrough\nnum_ranks: 2\nextra_key: 1\n") == ErrorKind::Recipe);
    CHECK(recipe_error("num_ranks: 2\n") == ErrorKind::Recipe);                      // missing method
    CHECK(recipe_error("merge_method: linear\nnum_ranks: 2\n") == ErrorKind::Recipe); // not passthrough
    CHECK(recipe_error("merge_method: passthrough\n") == ErrorKind::Recipe);          // missing ranks
    CHECK(recipe_error("merge_method: passthrough\nnum_ranks: 0\n") == ErrorKind::Recipe);
    CHECK(recipe_error("merge_method: passthrough\nnum_ranks: 2\naux: {embedding: c}\n") ==
          ErrorKind::Recipe);
    CHECK(recipe_error("merge_method: passthrough\nnum_ranks: 2\nslices: [{layers: [0]}]\n") ==
          ErrorKind::Recipe); // slice without source
    CHECK(recipe_error(
              "merge_method: passthrough\nnum_ranks: 2\nslices: [{source: c, layers: [0], targets: [0, 1]}]\n") ==
          ErrorKind::Recipe); // targets length mismatch
    CHECK(recipe_error("merge_method: passthrough\nnum_ranks: 2\nslices: [{source: c, layers: {start: 3, end: 3}}]\n") ==
          ErrorKind::Recipe); // empty range
    CHECK(recipe_error(": not yaml: [") == ErrorKind::Recipe);

    try {
        parse_recipe("merge_method: passthrough\nnum_ranks: 2\nslices: [{source: c, layers: [0], bogus: 1}]\n");
        CHECK(false);
    } catch (const TailorError& e) {
        CHECK(std::string(e.what()).find("slices[0].bogus") != std::string::npos);
    }
}

TEST_CASE("recipe YAML round trips through the emitter") {
    MergeRecipe recipe;
    recipe.base_checkpoint = "run/checkpoint-400";
    recipe.num_ranks = 4;
    recipe.slices.push_back({"run/checkpoint-300", {0, 2}, {0, 2}});
    recipe.slices.push_back({"run/checkpoint-200", {1}, {3}});
    recipe.aux = {{"embed_tokens", "run/checkpoint-300"}, {"norm", "run/checkpoint-200"}};
    recipe.config_from = "run/checkpoint-400";

    const MergeRecipe back = parse_recipe(recipe_to_yaml(recipe));
    CHECK(back.base_checkpoint == recipe.base_checkpoint);
    CHECK(back.num_ranks == recipe.num_ranks);
    REQUIRE(back.slices.size() == 2);
    CHECK(back.slices[0].layers == recipe.slices[0].layers);
    CHECK(back.slices[1].targets == recipe.slices[1].targets);
    CHECK(back.aux == recipe.aux);
    CHECK(back.config_from == recipe.config_from);
}
