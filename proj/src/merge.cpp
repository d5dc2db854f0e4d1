// SPDX-License-Identifier: Apache-2.0
#include "tailor/merge.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <set>
#include <thread>

#include "tailor/errors.hpp"
#include "tailor/trainer.hpp"

namespace tailor {

namespace {

struct SourceInfo {
    CheckpointSummary summary;
};

// Deterministic order: first mention in (slices, aux, base, config_from).
std::vector<std::string> distinct_sources(const MergeRecipe& recipe) {
    std::vector<std::string> order;
    auto note = [&](const std::string& path) {
        if (!path.empty() && path != "latest" &&
            std::find(order.begin(), order.end(), path) == order.end())
            order.push_back(path);
    };
    for (const auto& slice : recipe.slices) note(slice.source);
    for (const auto& [key, path] : recipe.aux) note(path);
    note(recipe.base_checkpoint);
    note(recipe.config_from);
    return order;
}

} // namespace

MergePlan resolve_plan(const MergeRecipe& recipe) {
    if (recipe.num_ranks < 1) fail(ErrorKind::Recipe, "num_ranks must be >= 1");

    MergePlan plan;
    plan.sources = distinct_sources(recipe);
    if (plan.sources.empty()) fail(ErrorKind::Recipe, "recipe names no source checkpoints");

    std::map<std::string, SourceInfo> sources;
    for (const auto& path : plan.sources) sources.emplace(path, SourceInfo{read_checkpoint_summary(path)});

    // All sources must agree on model geometry, rank count and grouping.
    const ModelSpec& geometry = sources.at(plan.sources.front()).summary.spec;
    for (const auto& path : plan.sources) {
        const CheckpointSummary& s = sources.at(path).summary;
        if (!s.spec.same_geometry(geometry))
            fail(ErrorKind::Geometry, "source '" + path + "' has a different model geometry");
        if (s.optim.num_ranks != recipe.num_ranks)
            fail(ErrorKind::Geometry, "source '" + path + "' was sharded over " +
                                          std::to_string(s.optim.num_ranks) + " ranks, recipe says " +
                                          std::to_string(recipe.num_ranks));
        if (s.optim.grouping != Grouping::Fine)
            fail(ErrorKind::Geometry, "source '" + path + "' uses the coarse grouping and cannot be merged");
    }
    plan.num_ranks = recipe.num_ranks;

    // Explicit layer slices, then aux modules, then the base fallback.
    std::map<ModuleId, MergePlan::Assignment> assignment;
    auto assign = [&](const ModuleId& target, const std::string& source, const ModuleId& source_module,
                      const std::string& where) {
        if (!module_valid(geometry, target))
            fail(ErrorKind::Recipe, where + ": module '" + module_name(target) + "' is not in the model");
        if (assignment.count(target))
            fail(ErrorKind::Recipe, where + ": target module '" + module_name(target) + "' assigned twice");
        assignment[target] = {source, source_module, sources.at(source).summary.trainer.step};
    };

    for (std::size_t i = 0; i < recipe.slices.size(); ++i) {
        const RecipeSlice& slice = recipe.slices[i];
        const std::string where = "slices[" + std::to_string(i) + "]";
        for (std::size_t k = 0; k < slice.layers.size(); ++k) {
            const int src_layer = slice.layers[k];
            const int dst_layer = slice.targets[k];
            if (src_layer >= geometry.num_layers)
                fail(ErrorKind::Recipe, where + ": layer " + std::to_string(src_layer) + " out of range");
            assign(ModuleId::transformer_layer(dst_layer), slice.source,
                   ModuleId::transformer_layer(src_layer), where);
        }
    }
    for (const auto& [key, path] : recipe.aux) {
        const ModuleId m = parse_module_name(key);
        if (!module_valid(geometry, m))
            fail(ErrorKind::Recipe, "aux." + key + ": module is not in the model (weight-tied spec)");
        assign(m, path, m, "aux." + key);
    }
    for (const auto& m : enumerate_modules(geometry)) {
        if (assignment.count(m)) continue;
        if (recipe.base_checkpoint.empty())
            fail(ErrorKind::Recipe, "module '" + module_name(m) +
                                        "' is not covered and no base_checkpoint is set");
        assignment[m] = {recipe.base_checkpoint, m,
                         sources.at(recipe.base_checkpoint).summary.trainer.step};
    }

    // Every requested module must exist in its source's manifest.
    for (const auto& [target, a] : assignment) {
        const CheckpointSummary& s = sources.at(a.source).summary;
        if (!s.manifest.contains(a.source_module))
            fail(ErrorKind::SourceLacksModule, "checkpoint '" + a.source + "' does not contain module '" +
                                                   module_name(a.source_module) + "'");
    }

    // Keep only the sources that actually provide modules; a base or config
    // checkpoint that ends up fully shadowed is validated above but never
    // loaded.
    std::erase_if(plan.sources, [&](const std::string& path) {
        for (const auto& [target, a] : assignment)
            if (a.source == path) return false;
        return true;
    });

    // Resolve the config source: explicit path, or the newest contributing
    // source (ties broken by lexicographically greatest path).
    if (recipe.config_from == "latest") {
        std::string best;
        std::int64_t best_step = -1;
        for (const auto& path : plan.sources) {
            const std::int64_t step = sources.at(path).summary.trainer.step;
            if (step > best_step || (step == best_step && path > best)) {
                best = path;
                best_step = step;
            }
        }
        plan.config_source = best;
    } else {
        plan.config_source = recipe.config_from;
    }

    plan.spec = sources.at(plan.config_source).summary.spec;
    plan.table = build_group_table(plan.spec);
    plan.assignment = std::move(assignment);

    // Expand to group copies, ascending by target group index.
    for (const auto& [target, a] : plan.assignment) {
        const auto target_groups = group_indices_for(plan.table, target);
        const auto source_groups = group_indices_for(plan.table, a.source_module);
        for (std::size_t i = 0; i < target_groups.size(); ++i)
            plan.group_copies.push_back({a.source, source_groups[i], target_groups[i]});
    }
    std::sort(plan.group_copies.begin(), plan.group_copies.end(),
              [](const auto& x, const auto& y) { return x.target_group < y.target_group; });
    if (static_cast<int>(plan.group_copies.size()) != plan.table.group_count())
        fail(ErrorKind::Consistency, "group copy list does not cover the target table");
    return plan;
}

namespace {

// Loads shard containers, optionally in parallel, counting file reads.
class ShardLoader {
  public:
    ShardLoader(std::vector<std::pair<std::string, int>> tasks, int workers,
                std::atomic<std::int64_t>& counter)
        : tasks_(std::move(tasks)), results_(tasks_.size()) {
        const int n = std::max(1, std::min<int>(workers, static_cast<int>(tasks_.size())));
        if (n <= 1) {
            for (std::size_t i = 0; i < tasks_.size(); ++i) load(i, counter);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr error;
        std::mutex error_mutex;
        pool.reserve(static_cast<std::size_t>(n));
        for (int w = 0; w < n; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= tasks_.size()) return;
                    try {
                        load(i, counter);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (error) std::rethrow_exception(error);
    }

    const TensorContainer& get(const std::string& source, int rank) const {
        for (std::size_t i = 0; i < tasks_.size(); ++i)
            if (tasks_[i].first == source && tasks_[i].second == rank) return results_[i];
        fail(ErrorKind::Consistency, "shard " + source + "#" + std::to_string(rank) + " was not loaded");
    }

  private:
    void load(std::size_t i, std::atomic<std::int64_t>& counter) {
        const auto& [source, rank] = tasks_[i];
        results_[i] = read_container(shard_path(source, rank));
        counter.fetch_add(1);
    }

    std::vector<std::pair<std::string, int>> tasks_;
    std::vector<TensorContainer> results_;
};

void copy_shard_entries(const TensorContainer& source, const std::string& source_path, int rank,
                        int source_group, int target_group, std::int64_t shard_length,
                        TensorContainer& out) {
    for (const char* field : {".master", ".exp_avg", ".exp_avg_sq"}) {
        const std::string src_key = "g" + std::to_string(source_group) + field;
        const std::string dst_key = "g" + std::to_string(target_group) + field;
        if (!source.has(src_key))
            fail(ErrorKind::MissingArtifact, "shard rank " + std::to_string(rank) + " of '" + source_path +
                                                 "' lacks '" + src_key + "'");
        const TensorEntry& entry = source.at(src_key);
        if (entry.dtype != Dtype::F32 || entry.shape != std::vector<std::int64_t>{shard_length})
            fail(ErrorKind::Geometry, "shard tensor '" + src_key + "' of '" + source_path +
                                          "' has unexpected dtype/shape");
        out.add(dst_key, Dtype::F32, entry.shape, entry.bytes);
    }
}

} // namespace

MergeStats execute_merge(const MergePlan& plan, const std::filesystem::path& out_dir,
                         const MergeOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    MergeStats stats;

    std::error_code ec;
    if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir, ec))
        fail(ErrorKind::Storage, "refusing to write into non-empty directory '" + out_dir.string() + "'");

    const ShardGeometry geom{plan.num_ranks};
    const int workers = options.workers > 0 ? options.workers : plan.num_ranks;

    // Source metadata (groups, hyperparams, steps) for every distinct source.
    std::map<std::string, CheckpointSummary> summaries;
    for (const auto& path : plan.sources) summaries.emplace(path, read_checkpoint_summary(path));
    if (!summaries.count(plan.config_source))
        summaries.emplace(plan.config_source, read_checkpoint_summary(plan.config_source));

    // Assemble the weight container: every output tensor is byte-identical
    // to its source checkpoint's tensor, renamed to the target position.
    TensorContainer weights;
    {
        std::map<std::string, TensorContainer> weight_files;
        for (const auto& [target, a] : plan.assignment) {
            if (!weight_files.count(a.source)) {
                weight_files.emplace(a.source, read_container(weights_path(a.source)));
                stats.weight_files_read += 1;
            }
            const TensorContainer& src = weight_files.at(a.source);
            const auto target_decls = tensors_of(plan.spec, target);
            const auto source_decls = tensors_of(plan.spec, a.source_module);
            for (std::size_t i = 0; i < target_decls.size(); ++i) {
                if (!src.has(source_decls[i].name))
                    fail(ErrorKind::MissingArtifact, "'" + a.source + "' lacks weight tensor '" +
                                                         source_decls[i].name + "'");
                const TensorEntry& entry = src.at(source_decls[i].name);
                if (entry.dtype != Dtype::BF16 || entry.shape != target_decls[i].shape)
                    fail(ErrorKind::Geometry, "weight tensor '" + source_decls[i].name + "' of '" +
                                                  a.source + "' has unexpected dtype/shape");
                weights.add(target_decls[i].name, Dtype::BF16, entry.shape, entry.bytes);
            }
        }
    }

    // Assemble the per-rank shard containers. The group copy order is fixed
    // (ascending target group), so output bytes never depend on the loading
    // schedule.
    std::atomic<std::int64_t> shard_reads{0};
    std::vector<TensorContainer> out_shards(static_cast<std::size_t>(plan.num_ranks));
    if (!options.uncached) {
        std::vector<std::pair<std::string, int>> tasks;
        for (const auto& path : plan.sources)
            for (int r = 0; r < plan.num_ranks; ++r) tasks.emplace_back(path, r);
        ShardLoader loader(std::move(tasks), workers, shard_reads);
        for (int r = 0; r < plan.num_ranks; ++r) {
            TensorContainer& out = out_shards[static_cast<std::size_t>(r)];
            out.metadata = {{"num_ranks", std::to_string(plan.num_ranks)}, {"rank", std::to_string(r)}};
            for (const auto& copy : plan.group_copies) {
                const auto length = plan.table.groups[static_cast<std::size_t>(copy.target_group)].element_count;
                copy_shard_entries(loader.get(copy.source, r), copy.source, r, copy.source_group,
                                   copy.target_group, geom.shard_length(length), out);
            }
        }
    } else {
        // Benchmark mode mirroring interleaved per-layer loading: every group
        // copy reloads its source shard file instead of caching it.
        for (int r = 0; r < plan.num_ranks; ++r) {
            TensorContainer& out = out_shards[static_cast<std::size_t>(r)];
            out.metadata = {{"num_ranks", std::to_string(plan.num_ranks)}, {"rank", std::to_string(r)}};
            for (const auto& copy : plan.group_copies) {
                const TensorContainer shard = read_container(shard_path(copy.source, r));
                shard_reads.fetch_add(1);
                const auto length = plan.table.groups[static_cast<std::size_t>(copy.target_group)].element_count;
                copy_shard_entries(shard, copy.source, r, copy.source_group, copy.target_group,
                                   geom.shard_length(length), out);
            }
        }
    }
    stats.shard_files_read = shard_reads.load();

    // Each group's hyperparameters come from its module's source; the global
    // optimizer step comes from the config source.
    const CheckpointSummary& config_src = summaries.at(plan.config_source);
    OptimMeta optim;
    optim.grouping = Grouping::Fine;
    optim.num_ranks = plan.num_ranks;
    optim.step = config_src.optim.step;
    for (const auto& copy : plan.group_copies) {
        const OptimGroupMeta* src_meta = summaries.at(copy.source).optim.find(copy.source_group);
        if (!src_meta)
            fail(ErrorKind::Consistency, "source group metadata missing for group " +
                                             std::to_string(copy.source_group));
        const GroupInfo& info = plan.table.groups[static_cast<std::size_t>(copy.target_group)];
        OptimGroupMeta m;
        m.index = copy.target_group;
        m.owner = info.owner ? module_name(*info.owner) : "coarse";
        m.decay = info.decay;
        m.true_length = info.element_count;
        m.padded_length = geom.padded_length(info.element_count);
        m.shard_length = geom.shard_length(info.element_count);
        m.hyper = src_meta->hyper;
        optim.groups.push_back(std::move(m));
    }

    SaveManifest manifest;
    manifest.step = config_src.trainer.step;
    manifest.strategy = "merged";
    manifest.modules = enumerate_modules(plan.spec);
    for (const auto& [target, a] : plan.assignment)
        manifest.provenance[module_name(target)] = {a.source, a.source_step};

    // All inputs validated; write the output directory.
    std::filesystem::create_directories(out_dir / "optim", ec);
    if (ec) fail(ErrorKind::Storage, "cannot create '" + out_dir.string() + "': " + ec.message());
    write_container(weights_path(out_dir), weights);
    for (int r = 0; r < plan.num_ranks; ++r)
        write_container(shard_path(out_dir, r), out_shards[static_cast<std::size_t>(r)]);
    write_text_file(optim_meta_path(out_dir), render_optim_meta_json(optim));
    // Configuration and trainer state are copied verbatim from the most
    // recent (config) source to preserve training continuity.
    write_file_bytes(config_path(out_dir), read_file_bytes(config_path(plan.config_source)));
    write_file_bytes(trainer_state_path(out_dir), read_file_bytes(trainer_state_path(plan.config_source)));
    write_text_file(manifest_path(out_dir), render_manifest_json(manifest));

    // The output must satisfy every checkpoint invariant, including the
    // weight/master duality, which holds because each module's weights and
    // optimizer slices come from the same source. Re-verify.
    read_checkpoint(out_dir);

    stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return stats;
}

MergeRecipe recipe_from_manifests(const std::filesystem::path& run_dir, std::int64_t failure_step) {
    std::vector<CheckpointSummary> candidates;
    for (const auto& dir : list_checkpoints(run_dir)) {
        CheckpointSummary s = read_checkpoint_summary(dir);
        if (s.trainer.step <= failure_step) candidates.push_back(std::move(s));
    }
    if (candidates.empty())
        fail(ErrorKind::UnrecoverableModule,
             "no checkpoint at or before step " + std::to_string(failure_step) + " in '" +
                 run_dir.string() + "'");

    const ModelSpec& geometry = candidates.front().spec;
    for (const auto& s : candidates)
        if (!s.spec.same_geometry(geometry))
            fail(ErrorKind::Geometry, "checkpoints in '" + run_dir.string() + "' disagree on model geometry");

    // Newest checkpoint containing each module wins; the newest checkpoint
    // overall becomes base and config source.
    auto newer = [](const CheckpointSummary& a, const CheckpointSummary& b) {
        return a.trainer.step != b.trainer.step ? a.trainer.step > b.trainer.step
                                                : a.dir.string() > b.dir.string();
    };
    const CheckpointSummary* latest = &candidates.front();
    for (const auto& s : candidates)
        if (newer(s, *latest)) latest = &s;

    std::map<ModuleId, const CheckpointSummary*> chosen;
    for (const auto& m : enumerate_modules(geometry)) {
        const CheckpointSummary* best = nullptr;
        for (const auto& s : candidates)
            if (s.manifest.contains(m) && (!best || newer(s, *best))) best = &s;
        if (!best)
            fail(ErrorKind::UnrecoverableModule, "module '" + module_name(m) +
                                                     "' was never saved at or before step " +
                                                     std::to_string(failure_step));
        chosen[m] = best;
    }

    MergeRecipe recipe;
    recipe.num_ranks = latest->optim.num_ranks;
    recipe.base_checkpoint = latest->dir.string();
    recipe.config_from = latest->dir.string();

    // Modules not covered by the base are listed explicitly, grouped per source.
    std::map<std::string, std::vector<int>> layer_slices; // source -> layers
    for (const auto& [m, summary] : chosen) {
        if (summary == latest) continue;
        const std::string source = summary->dir.string();
        if (m.kind == ModuleKind::TransformerLayer) {
            layer_slices[source].push_back(m.layer);
        } else {
            recipe.aux[module_name(m)] = source;
        }
    }
    for (auto& [source, layers] : layer_slices) {
        std::sort(layers.begin(), layers.end());
        recipe.slices.push_back({source, layers, layers});
    }
    return recipe;
}

} // namespace tailor
