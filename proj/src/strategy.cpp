// SPDX-License-Identifier: Apache-2.0
#include "tailor/strategy.hpp"

#include <algorithm>

#include "tailor/checkpoint.hpp"
#include "tailor/errors.hpp"

namespace tailor {

std::string strategy_kind_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::Full: return "full";
        case StrategyKind::Parity: return "parity";
        case StrategyKind::Filter: return "filter";
    }
    fail(ErrorKind::Consistency, "unknown strategy kind");
}

StrategyKind parse_strategy_kind(const std::string& name) {
    if (name == "full") return StrategyKind::Full;
    if (name == "parity") return StrategyKind::Parity;
    if (name == "filter") return StrategyKind::Filter;
    fail(ErrorKind::Recipe, "unknown strategy '" + name + "' (expected full, parity or filter)");
}

void StrategyConfig::validate(const ModelSpec& spec) const {
    if (interval < 1) fail(ErrorKind::Recipe, "checkpoint interval must be >= 1");
    if (kind == StrategyKind::Filter) {
        if (head_count < 0 || tail_count < 0 || sparse_multiple < 1)
            fail(ErrorKind::Recipe, "invalid filter parameters");
        if (head_count + tail_count > spec.num_layers)
            fail(ErrorKind::Recipe, "filter head_count + tail_count exceeds the layer count");
    }
}

namespace {

std::vector<ModuleId> in_canonical_order(const ModelSpec& spec, const std::set<ModuleId>& picked) {
    std::vector<ModuleId> out;
    for (const auto& m : enumerate_modules(spec))
        if (picked.count(m)) out.push_back(m);
    return out;
}

} // namespace

std::vector<ModuleId> modules_to_save(const StrategyConfig& cfg, const ModelSpec& spec,
                                      std::int64_t checkpoint_counter) {
    spec.validate();
    cfg.validate(spec);
    if (checkpoint_counter < 1) fail(ErrorKind::Geometry, "checkpoint counter starts at 1");
    const int L = spec.num_layers;

    if (cfg.kind == StrategyKind::Full) return enumerate_modules(spec);

    std::set<ModuleId> picked;
    if (cfg.kind == StrategyKind::Parity) {
        if (checkpoint_counter % 2 == 1) {
            for (int i = 0; i < L; i += 2) picked.insert(ModuleId::transformer_layer(i));
            picked.insert(ModuleId::norm());
            if (!spec.weight_tied) picked.insert(ModuleId::lm_head());
        } else {
            for (int i = 1; i < L; i += 2) picked.insert(ModuleId::transformer_layer(i));
            picked.insert(ModuleId::embed_tokens());
        }
        return in_canonical_order(spec, picked);
    }

    // Filter: boundary layers and norm on every checkpoint; middle layers and
    // the large aux modules ride the sparse checkpoints, alternating halves.
    for (int i = 0; i < cfg.head_count; ++i) picked.insert(ModuleId::transformer_layer(i));
    for (int i = L - cfg.tail_count; i < L; ++i) picked.insert(ModuleId::transformer_layer(i));
    picked.insert(ModuleId::norm());

    if (checkpoint_counter % cfg.sparse_multiple == 0) {
        const std::int64_t multiple = checkpoint_counter / cfg.sparse_multiple;
        std::vector<int> middle;
        for (int i = cfg.head_count; i < L - cfg.tail_count; ++i) middle.push_back(i);
        const std::size_t lower_count = (middle.size() + 1) / 2;
        if (multiple % 2 == 1) {
            for (std::size_t i = 0; i < lower_count; ++i) picked.insert(ModuleId::transformer_layer(middle[i]));
            picked.insert(ModuleId::embed_tokens());
        } else {
            for (std::size_t i = lower_count; i < middle.size(); ++i)
                picked.insert(ModuleId::transformer_layer(middle[i]));
            if (!spec.weight_tied) picked.insert(ModuleId::lm_head());
        }
    }
    return in_canonical_order(spec, picked);
}

std::int64_t expected_run_bytes(const StrategyConfig& cfg, const ModelSpec& spec,
                                int num_checkpoints, const ShardGeometry& geom,
                                const AdamHyperparams& base_hyper) {
    spec.validate();
    cfg.validate(spec);
    if (num_checkpoints < 0) fail(ErrorKind::Geometry, "negative checkpoint count");

    const GroupTable table = build_group_table(spec);
    std::int64_t total = 0;
    for (int c = 1; c <= num_checkpoints; ++c) {
        const auto modules = modules_to_save(cfg, spec, c);
        const std::int64_t step = static_cast<std::int64_t>(c) * cfg.interval;

        // Weight container: BF16 tensors of the saved modules.
        std::map<std::string, std::pair<Dtype, std::vector<std::int64_t>>> weight_decls;
        for (const auto& m : modules)
            for (const auto& t : tensors_of(spec, m)) weight_decls[t.name] = {Dtype::BF16, t.shape};
        total += container_size_for(weight_decls, {});

        // Rank shard containers: three F32 vectors per saved group.
        const auto group_indices = group_indices_for_modules(table, modules);
        for (int r = 0; r < geom.num_ranks; ++r) {
            std::map<std::string, std::pair<Dtype, std::vector<std::int64_t>>> shard_decls;
            for (int g : group_indices) {
                const auto chunk = geom.shard_length(table.groups[static_cast<std::size_t>(g)].element_count);
                const std::string key = "g" + std::to_string(g);
                for (const char* field : {".master", ".exp_avg", ".exp_avg_sq"})
                    shard_decls[key + field] = {Dtype::F32, {chunk}};
            }
            total += container_size_for(shard_decls, {{"num_ranks", std::to_string(geom.num_ranks)},
                                                      {"rank", std::to_string(r)}});
        }

        // Sidecar JSON files, rendered exactly as the writer would.
        std::map<int, GroupState> group_hypers;
        for (int g : group_indices) {
            GroupState s;
            s.hyper = hyper_for_class(base_hyper, table.groups[static_cast<std::size_t>(g)].decay);
            group_hypers.emplace(g, std::move(s));
        }
        OptimMeta optim = build_optim_meta(table, group_hypers, geom, step);
        total += static_cast<std::int64_t>(render_optim_meta_json(optim).size());
        total += static_cast<std::int64_t>(render_config_json(spec).size());

        TrainerMeta trainer;
        trainer.step = step;
        trainer.lr = base_hyper.lr;
        trainer.optimizer_t = step;
        trainer.strategy = cfg;
        trainer.checkpoint_counter = c;
        trainer.rng_seed = spec.seed;
        total += static_cast<std::int64_t>(render_trainer_state_json(trainer).size());

        SaveManifest manifest;
        manifest.step = step;
        manifest.strategy = strategy_kind_name(cfg.kind);
        manifest.modules = modules;
        total += static_cast<std::int64_t>(render_manifest_json(manifest).size());
    }
    return total;
}

} // namespace tailor
