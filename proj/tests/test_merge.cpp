// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "tailor/errors.hpp"
#include "tailor/merge.hpp"
#include "tailor/trainer.hpp"
#include "tailor/verify.hpp"

using namespace tailor;
using namespace tailor::test;

namespace {

// Writes a full checkpoint for each requested step from one deterministic
// in-memory trajectory; returns the per-step snapshots for oracle use.
struct SourceRun {
    ModelSpec spec;
    GroupTable table;
    std::map<std::int64_t, OptimizerState> snapshots;
    std::vector<std::filesystem::path> dirs;
};

SourceRun make_sources(const TempDir& tmp, const ModelSpec& spec, const std::vector<std::int64_t>& steps,
                       int num_ranks) {
    SourceRun run;
    run.spec = spec;
    run.table = build_group_table(spec);
    AdamHyperparams base;
    base.weight_decay = kDefaultWeightDecay;
    auto mem = run_in_memory(spec, steps.back(), steps, Grouping::Fine, base);
    run.snapshots = std::move(mem.snapshots);
    for (auto step : steps) {
        auto dir = tmp.path / ("src-" + std::to_string(step)) / checkpoint_dir_name(step);
        std::filesystem::create_directories(dir.parent_path());
        write_checkpoint(dir, make_checkpoint_data(spec, run.table, run.snapshots.at(step), step, num_ranks));
        run.dirs.push_back(dir);
    }
    return run;
}

// Brute-force in-memory assembly: the expected fine state for an assignment
// of target modules to source snapshots.
OptimizerState assemble_oracle(const ModelSpec& spec, const GroupTable& table,
                               const std::map<ModuleId, std::pair<const OptimizerState*, ModuleId>>& pick) {
    OptimizerState out = zero_state(spec, table, AdamHyperparams{});
    for (const auto& [target, from] : pick) {
        const auto tgt_groups = group_indices_for(table, target);
        const auto src_groups = group_indices_for(table, from.second);
        for (std::size_t i = 0; i < tgt_groups.size(); ++i)
            out[static_cast<std::size_t>(tgt_groups[i])] =
                (*from.first)[static_cast<std::size_t>(src_groups[i])];
    }
    return out;
}

ErrorKind merge_error(const MergeRecipe& recipe) {
    try {
        resolve_plan(recipe);
    } catch (const TailorError& e) {
        return e.kind();
    }
    FAIL("expected a TailorError");
    return ErrorKind::Consistency;
}

} // namespace

TEST_CASE("identity merge is a byte-level fixed point") {
    TempDir tmp;
    auto spec = toy_spec(3, false, 808);
    auto run = make_sources(tmp, spec, {10}, 2);

    MergeRecipe recipe;
    recipe.base_checkpoint = run.dirs[0].string();
    recipe.num_ranks = 2;
    auto stats = execute_merge(resolve_plan(recipe), tmp.sub("merged"));
    CHECK(stats.shard_files_read == 2);

    // model.weights and every shard file reproduce the source bytes.
    CHECK(files_equal(weights_path(run.dirs[0]), weights_path(tmp.sub("merged"))));
    for (int r = 0; r < 2; ++r)
        CHECK(files_equal(shard_path(run.dirs[0], r), shard_path(tmp.sub("merged"), r)));
    CHECK(files_equal(config_path(run.dirs[0]), config_path(tmp.sub("merged"))));
    CHECK(files_equal(trainer_state_path(run.dirs[0]), trainer_state_path(tmp.sub("merged"))));

    // Merging the merged checkpoint again is byte-stable (manifest provenance
    // aside, which now exists on both sides).
    MergeRecipe again;
    again.base_checkpoint = tmp.sub("merged").string();
    again.num_ranks = 2;
    execute_merge(resolve_plan(again), tmp.sub("merged2"));
    CHECK(files_equal(weights_path(tmp.sub("merged")), weights_path(tmp.sub("merged2"))));
    for (int r = 0; r < 2; ++r)
        CHECK(files_equal(shard_path(tmp.sub("merged"), r), shard_path(tmp.sub("merged2"), r)));
}

TEST_CASE("parity plan covers 11 groups for L=4 untied and matches the oracle") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 909);
    auto run = make_sources(tmp, spec, {100, 200}, 4);

    MergeRecipe recipe;
    recipe.num_ranks = 4;
    recipe.slices.push_back({run.dirs[0].string(), {0, 2}, {0, 2}});
    recipe.slices.push_back({run.dirs[1].string(), {1, 3}, {1, 3}});
    recipe.aux = {{"embed_tokens", run.dirs[0].string()},
                  {"norm", run.dirs[1].string()},
                  {"lm_head", run.dirs[1].string()}};
    const MergePlan plan = resolve_plan(recipe);
    CHECK(plan.group_copies.size() == 11);
    CHECK(plan.config_source == run.dirs[1].string());

    execute_merge(plan, tmp.sub("merged"));
    const CheckpointData merged = read_checkpoint(tmp.sub("merged"));
    CHECK(merged.trainer.step == 200);
    CHECK(merged.manifest.provenance.size() == 7);

    const OptimizerState& at100 = run.snapshots.at(100);
    const OptimizerState& at200 = run.snapshots.at(200);
    std::map<ModuleId, std::pair<const OptimizerState*, ModuleId>> pick;
    pick[ModuleId::transformer_layer(0)] = {&at100, ModuleId::transformer_layer(0)};
    pick[ModuleId::transformer_layer(2)] = {&at100, ModuleId::transformer_layer(2)};
    pick[ModuleId::embed_tokens()] = {&at100, ModuleId::embed_tokens()};
    pick[ModuleId::transformer_layer(1)] = {&at200, ModuleId::transformer_layer(1)};
    pick[ModuleId::transformer_layer(3)] = {&at200, ModuleId::transformer_layer(3)};
    pick[ModuleId::norm()] = {&at200, ModuleId::norm()};
    pick[ModuleId::lm_head()] = {&at200, ModuleId::lm_head()};
    const OptimizerState expected = assemble_oracle(spec, run.table, pick);
    for (int g = 0; g < run.table.group_count(); ++g)
        CHECK(states_equal(merged.groups.at(g), expected[static_cast<std::size_t>(g)]));

    // Distinct provenance sources listed in the manifest.
    std::set<std::string> sources;
    for (const auto& [name, p] : merged.manifest.provenance) sources.insert(p.source);
    CHECK(sources.size() == 2);
}

TEST_CASE("cross-position targets move layers and their groups") {
    TempDir tmp;
    auto spec = toy_spec(4, true, 1212);
    auto run = make_sources(tmp, spec, {50}, 2);

    MergeRecipe recipe;
    recipe.base_checkpoint = run.dirs[0].string();
    recipe.num_ranks = 2;
    recipe.slices.push_back({run.dirs[0].string(), {0, 1}, {3, 2}}); // swap into the tail
    const MergePlan plan = resolve_plan(recipe);
    execute_merge(plan, tmp.sub("merged"));
    const CheckpointData merged = read_checkpoint(tmp.sub("merged"));

    const OptimizerState& at50 = run.snapshots.at(50);
    std::map<ModuleId, std::pair<const OptimizerState*, ModuleId>> pick;
    for (const auto& m : enumerate_modules(spec)) pick[m] = {&at50, m};
    pick[ModuleId::transformer_layer(3)] = {&at50, ModuleId::transformer_layer(0)};
    pick[ModuleId::transformer_layer(2)] = {&at50, ModuleId::transformer_layer(1)};
    const OptimizerState expected = assemble_oracle(spec, run.table, pick);
    for (int g = 0; g < run.table.group_count(); ++g)
        CHECK(states_equal(merged.groups.at(g), expected[static_cast<std::size_t>(g)]));
}

TEST_CASE("tied models emit no lm_head tensor") {
    TempDir tmp;
    auto spec = toy_spec(2, true, 33);
    auto run = make_sources(tmp, spec, {10}, 1);
    MergeRecipe recipe;
    recipe.base_checkpoint = run.dirs[0].string();
    recipe.num_ranks = 1;
    execute_merge(resolve_plan(recipe), tmp.sub("merged"));
    const CheckpointData merged = read_checkpoint(tmp.sub("merged"));
    CHECK_FALSE(merged.weights.has("lm_head.weight"));
    CHECK(merged.manifest.modules.size() == 4);
}

TEST_CASE("coverage and availability violations") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 4);
    auto run = make_sources(tmp, spec, {10}, 2);

    SUBCASE("uncovered module without base") {
        MergeRecipe recipe;
        recipe.num_ranks = 2;
        recipe.slices.push_back({run.dirs[0].string(), {0, 1, 2, 3}, {0, 1, 2, 3}});
        recipe.aux = {{"embed_tokens", run.dirs[0].string()}, {"norm", run.dirs[0].string()}};
        CHECK(merge_error(recipe) == ErrorKind::Recipe); // lm_head uncovered
    }
    SUBCASE("duplicate target") {
        MergeRecipe recipe;
        recipe.base_checkpoint = run.dirs[0].string();
        recipe.num_ranks = 2;
        recipe.slices.push_back({run.dirs[0].string(), {0, 1}, {2, 2}});
        CHECK(merge_error(recipe) == ErrorKind::Recipe);
    }
    SUBCASE("rank count mismatch") {
        MergeRecipe recipe;
        recipe.base_checkpoint = run.dirs[0].string();
        recipe.num_ranks = 3;
        CHECK(merge_error(recipe) == ErrorKind::Geometry);
    }
    SUBCASE("source lacks a requested module") {
        // Build a partial source containing only layer 0 and norm.
        const OptimizerState& snap = run.snapshots.at(10);
        const std::vector<ModuleId> subset{ModuleId::transformer_layer(0), ModuleId::norm()};
        CheckpointData data;
        data.spec = spec;
        data.trainer.step = 20;
        data.trainer.optimizer_t = 20;
        data.trainer.strategy.interval = 20;
        data.trainer.checkpoint_counter = 1;
        data.trainer.rng_seed = spec.seed;
        data.manifest.step = 20;
        data.manifest.strategy = "manual";
        data.manifest.modules = subset;
        data.table = run.table;
        data.num_ranks = 2;
        for (int g : group_indices_for_modules(run.table, subset))
            data.groups.emplace(g, snap[static_cast<std::size_t>(g)]);
        data.weights = derive_weights(spec, run.table, data.groups, subset);
        write_checkpoint(tmp.sub("partial"), data);

        MergeRecipe recipe;
        recipe.base_checkpoint = run.dirs[0].string();
        recipe.num_ranks = 2;
        recipe.slices.push_back({tmp.sub("partial").string(), {2}, {2}});
        CHECK(merge_error(recipe) == ErrorKind::SourceLacksModule);
    }
    SUBCASE("geometry mismatch across sources") {
        auto other_spec = toy_spec(4, false, 4, 8, 16, 64); // larger vocab
        TempDir tmp2;
        auto other = make_sources(tmp2, other_spec, {10}, 2);
        MergeRecipe recipe;
        recipe.base_checkpoint = run.dirs[0].string();
        recipe.num_ranks = 2;
        recipe.slices.push_back({other.dirs[0].string(), {0}, {0}});
        CHECK(merge_error(recipe) == ErrorKind::Geometry);
    }
}

TEST_CASE("config_from selects the trainer state source") {
    TempDir tmp;
    auto spec = toy_spec(2, false, 606);
    auto run = make_sources(tmp, spec, {100, 200}, 2);

    MergeRecipe recipe;
    recipe.base_checkpoint = run.dirs[1].string();
    recipe.num_ranks = 2;
    recipe.slices.push_back({run.dirs[0].string(), {0}, {0}});

    SUBCASE("latest picks the highest step") {
        execute_merge(resolve_plan(recipe), tmp.sub("m"));
        CHECK(read_checkpoint_summary(tmp.sub("m")).trainer.step == 200);
    }
    SUBCASE("explicit path wins") {
        recipe.config_from = run.dirs[0].string();
        execute_merge(resolve_plan(recipe), tmp.sub("m"));
        const auto summary = read_checkpoint_summary(tmp.sub("m"));
        CHECK(summary.trainer.step == 100);
        CHECK(summary.optim.step == 100);
    }
    SUBCASE("a config-only source contributes no shard reads") {
        MergeRecipe identity;
        identity.base_checkpoint = run.dirs[0].string();
        identity.num_ranks = 2;
        identity.config_from = run.dirs[1].string();
        const auto stats = execute_merge(resolve_plan(identity), tmp.sub("m"));
        CHECK(stats.shard_files_read == 2);
        CHECK(read_checkpoint_summary(tmp.sub("m")).trainer.step == 200);
    }
}

TEST_CASE("per-group hyperparams follow each module's source") {
    TempDir tmp;
    auto spec = toy_spec(2, false, 4141);
    auto table = build_group_table(spec);

    // Two sources with different decay-group learning rates.
    std::mt19937_64 rng(1);
    for (int i = 0; i < 2; ++i) {
        AdamHyperparams base;
        base.lr = i == 0 ? 1e-3 : 5e-4;
        base.weight_decay = 0.01;
        auto state = random_state(spec, table, rng, base);
        write_checkpoint(tmp.sub("s" + std::to_string(i)),
                         make_checkpoint_data(spec, table, state, 10 * (i + 1), 1));
    }

    MergeRecipe recipe;
    recipe.base_checkpoint = tmp.sub("s0").string();
    recipe.num_ranks = 1;
    recipe.slices.push_back({tmp.sub("s1").string(), {1}, {1}});
    execute_merge(resolve_plan(recipe), tmp.sub("m"));

    const CheckpointData merged = read_checkpoint(tmp.sub("m"));
    const auto layer1 = group_indices_for(merged.table, ModuleId::transformer_layer(1));
    const auto layer0 = group_indices_for(merged.table, ModuleId::transformer_layer(0));
    CHECK(merged.groups.at(layer1[1]).hyper.lr == 5e-4);
    CHECK(merged.groups.at(layer0[1]).hyper.lr == 1e-3);
}

TEST_CASE("instrumented reads stay within N x distinct sources when cached") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 2323);
    auto run = make_sources(tmp, spec, {100, 200}, 4);

    MergeRecipe recipe;
    recipe.num_ranks = 4;
    recipe.slices.push_back({run.dirs[0].string(), {0, 2}, {0, 2}});
    recipe.slices.push_back({run.dirs[1].string(), {1, 3}, {1, 3}});
    recipe.aux = {{"embed_tokens", run.dirs[0].string()},
                  {"norm", run.dirs[1].string()},
                  {"lm_head", run.dirs[1].string()}};
    const MergePlan plan = resolve_plan(recipe);

    auto cached = execute_merge(plan, tmp.sub("cached"));
    CHECK(cached.shard_files_read <= 8); // N x K = 4 x 2
    CHECK(cached.weight_files_read == 2);

    MergeOptions uncached;
    uncached.uncached = true;
    auto slow = execute_merge(plan, tmp.sub("uncached"), uncached);
    CHECK(slow.shard_files_read == 4 * 11); // one load per (rank, group copy)
    CHECK(dirs_equal(tmp.sub("cached"), tmp.sub("uncached")));
}

TEST_CASE("coverage totality: random recipes either cover every module once or error") {
    TempDir tmp;
    auto spec = toy_spec(4, false, 515);
    auto run = make_sources(tmp, spec, {10}, 2);
    std::mt19937_64 rng(99);

    for (int i = 0; i < 50; ++i) {
        // Randomly drop modules from explicit coverage and randomly add the
        // base fallback; resolution must succeed with full coverage exactly
        // when the base is present.
        MergeRecipe recipe;
        recipe.num_ranks = 2;
        const bool has_base = (rng() & 1) != 0;
        if (has_base) recipe.base_checkpoint = run.dirs[0].string();
        std::vector<int> layers;
        bool dropped = false;
        for (int l = 0; l < spec.num_layers; ++l) {
            if ((rng() % 4) == 0) {
                dropped = true;
                continue;
            }
            layers.push_back(l);
        }
        if (!layers.empty()) recipe.slices.push_back({run.dirs[0].string(), layers, layers});
        for (const char* aux : {"embed_tokens", "norm", "lm_head"}) {
            if ((rng() % 4) == 0) {
                dropped = true;
                continue;
            }
            recipe.aux[aux] = run.dirs[0].string();
        }

        if (has_base || !dropped) {
            const MergePlan plan = resolve_plan(recipe);
            CHECK(plan.group_copies.size() == 11);
            std::set<int> targets;
            for (const auto& c : plan.group_copies) CHECK(targets.insert(c.target_group).second);
        } else {
            CHECK(merge_error(recipe) == ErrorKind::Recipe);
        }
    }
}

TEST_CASE("merge leaves its sources untouched") {
    TempDir tmp;
    auto spec = toy_spec(2, false, 717);
    auto run = make_sources(tmp, spec, {10, 20}, 2);
    const auto before_a = dir_contents(run.dirs[0]);
    const auto before_b = dir_contents(run.dirs[1]);

    MergeRecipe recipe;
    recipe.base_checkpoint = run.dirs[1].string();
    recipe.num_ranks = 2;
    recipe.slices.push_back({run.dirs[0].string(), {0}, {0}});
    execute_merge(resolve_plan(recipe), tmp.sub("m"));

    CHECK(dir_contents(run.dirs[0]) == before_a);
    CHECK(dir_contents(run.dirs[1]) == before_b);
}
