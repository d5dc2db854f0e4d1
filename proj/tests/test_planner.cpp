// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "helpers.hpp"
#include "tailor/errors.hpp"
#include "tailor/merge.hpp"
#include "tailor/trainer.hpp"

using namespace tailor;
using namespace tailor::test;

namespace {

std::filesystem::path parity_run(const TempDir& tmp, const ModelSpec& spec, int checkpoints) {
    TrainRunConfig cfg;
    cfg.spec = spec;
    cfg.strategy.kind = StrategyKind::Parity;
    cfg.strategy.interval = 100;
    cfg.total_steps = 100 * checkpoints;
    cfg.num_ranks = 2;
    cfg.hyper.weight_decay = kDefaultWeightDecay;
    train(cfg, tmp.sub("run"));
    return tmp.sub("run");
}

} // namespace

TEST_CASE("parity run planning follows the latest-version rule") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 11);
    auto run = parity_run(tmp, spec, 2); // A at 100, B at 200

    const MergeRecipe recipe = recipe_from_manifests(run, 250);
    // Base (and config) is checkpoint-200 = set B: odd layers + embed.
    CHECK(recipe.base_checkpoint == (run / "checkpoint-200").string());
    CHECK(recipe.config_from == (run / "checkpoint-200").string());
    // Set A (even layers, lm_head, norm) must be drawn from checkpoint-100.
    REQUIRE(recipe.slices.size() == 1);
    CHECK(recipe.slices[0].source == (run / "checkpoint-100").string());
    CHECK(recipe.slices[0].layers == std::vector<int>{0, 2});
    CHECK(recipe.aux.at("norm") == (run / "checkpoint-100").string());
    CHECK(recipe.aux.at("lm_head") == (run / "checkpoint-100").string());
    CHECK(recipe.aux.count("embed_tokens") == 0); // covered by the base

    // The recipe resolves and covers the full model.
    const MergePlan plan = resolve_plan(recipe);
    CHECK(plan.group_copies.size() == 11);
}

TEST_CASE("failure step bounds which checkpoints participate") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 12);
    auto run = parity_run(tmp, spec, 4); // A@100, B@200, A@300, B@400

    const MergeRecipe at450 = recipe_from_manifests(run, 450);
    CHECK(at450.base_checkpoint == (run / "checkpoint-400").string());
    CHECK(at450.slices[0].source == (run / "checkpoint-300").string());

    const MergeRecipe at350 = recipe_from_manifests(run, 350);
    CHECK(at350.base_checkpoint == (run / "checkpoint-300").string());
    CHECK(at350.slices[0].source == (run / "checkpoint-200").string());
}

TEST_CASE("full runs plan to an identity recipe on the last checkpoint") {
    TempDir tmp;
    auto spec = toy_spec(2, false, 13);
    TrainRunConfig cfg;
    cfg.spec = spec;
    cfg.strategy.kind = StrategyKind::Full;
    cfg.strategy.interval = 100;
    cfg.total_steps = 250;
    cfg.num_ranks = 1;
    train(cfg, tmp.sub("run"));

    const MergeRecipe recipe = recipe_from_manifests(tmp.sub("run"), 250);
    CHECK(recipe.base_checkpoint == (tmp.sub("run") / "checkpoint-200").string());
    CHECK(recipe.slices.empty());
    CHECK(recipe.aux.empty());
    CHECK(recipe.num_ranks == 1);
}

TEST_CASE("unrecoverable modules are named") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 14);
    auto run = parity_run(tmp, spec, 2);

    // Before any checkpoint: nothing is recoverable.
    try {
        recipe_from_manifests(run, 50);
        CHECK(false);
    } catch (const TailorError& e) {
        CHECK(e.kind() == ErrorKind::UnrecoverableModule);
    }

    // After only the first (set A) checkpoint, set B modules never appeared;
    // the first one in canonical order is embed_tokens.
    try {
        recipe_from_manifests(run, 150);
        CHECK(false);
    } catch (const TailorError& e) {
        CHECK(e.kind() == ErrorKind::UnrecoverableModule);
        CHECK(std::string(e.what()).find("embed_tokens") != std::string::npos);
    }
}

TEST_CASE("planned recipes merge into resumable checkpoints") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 15);
    auto run = parity_run(tmp, spec, 2);
    inject_failure(run, 230);

    const MergeRecipe recipe = recipe_from_manifests(run, 230);
    execute_merge(resolve_plan(recipe), tmp.sub("merged"));
    auto result = resume(tmp.sub("merged"), 3, tmp.sub("resumed"));
    CHECK(result.meta.step == 203);
    for (const auto& g : result.state)
        for (float x : g.master) CHECK(std::isfinite(x));
}
