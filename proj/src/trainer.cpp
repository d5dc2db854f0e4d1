// SPDX-License-Identifier: Apache-2.0
#include "tailor/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tailor/errors.hpp"

namespace tailor {

using nlohmann::json;

void TrainRunConfig::validate() const {
    spec.validate();
    strategy.validate(spec);
    hyper.validate();
    if (total_steps < 0) fail(ErrorKind::Recipe, "total_steps must be >= 0");
    if (num_ranks < 1) fail(ErrorKind::Recipe, "num_ranks must be >= 1");
    if (grouping == Grouping::Coarse && strategy.kind != StrategyKind::Full)
        fail(ErrorKind::Recipe, "partial strategies require the fine (layer-aligned) grouping");
}

std::pair<double, double> train_step(const ModelSpec& spec, const GroupTable& table,
                                     OptimizerState& state, OptimizerStepCounter& counter,
                                     const GradientSource& src, std::int64_t step) {
    const auto grads = synth_grad(src, step, spec, table, state);
    double grad_sq = 0.0;
    for (const auto& g : grads)
        for (float x : g) grad_sq += static_cast<double>(x) * static_cast<double>(x);
    const double update_sq = apply_step(state, grads, counter);
    return {std::sqrt(grad_sq), std::sqrt(update_sq)};
}

namespace {

void require_fresh_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir, ec))
        fail(ErrorKind::Storage, "refusing to write into non-empty directory '" + dir.string() + "'");
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Storage, "cannot create '" + dir.string() + "': " + ec.message());
}

struct RunLog {
    std::ofstream out;

    explicit RunLog(const std::filesystem::path& run_dir) : out(run_dir / "log.jsonl", std::ios::binary) {
        if (!out) fail(ErrorKind::Storage, "cannot create log in '" + run_dir.string() + "'");
    }
    void record(std::int64_t step, double grad_norm, double update_norm) {
        out << json{{"grad_norm", grad_norm}, {"step", step}, {"update_norm", update_norm}}.dump()
            << "\n";
        if (!out) fail(ErrorKind::Storage, "log write failed");
    }
};

std::filesystem::path save_checkpoint(const std::filesystem::path& run_dir, const ModelSpec& spec,
                                      const GroupTable& table, const OptimizerState& state,
                                      const TrainerMeta& meta, int num_ranks,
                                      const std::vector<ModuleId>& modules) {
    CheckpointData data;
    data.spec = spec;
    data.trainer = meta;
    data.manifest.step = meta.step;
    data.manifest.strategy = strategy_kind_name(meta.strategy.kind);
    data.manifest.modules = modules;
    data.table = table;
    data.num_ranks = num_ranks;
    for (int g : group_indices_for_modules(table, modules))
        data.groups.emplace(g, state[static_cast<std::size_t>(g)]);
    data.weights = derive_weights(spec, table, data.groups, modules);

    const auto dir = run_dir / checkpoint_dir_name(meta.step);
    write_checkpoint(dir, data);
    return dir;
}

TrainResult run_loop(const ModelSpec& spec, const GroupTable& table, OptimizerState state,
                     OptimizerStepCounter counter, TrainerMeta meta, const StrategyConfig& strategy,
                     int num_ranks, std::int64_t from_step, std::int64_t to_step,
                     const std::filesystem::path& out_dir) {
    const GradientSource src{spec.seed};
    RunLog log(out_dir);

    TrainResult result;
    result.table = table;
    for (std::int64_t step = from_step + 1; step <= to_step; ++step) {
        const auto [grad_norm, update_norm] = train_step(spec, table, state, counter, src, step);
        log.record(step, grad_norm, update_norm);
        meta.step = step;
        meta.optimizer_t = counter.t;
        if (step % strategy.interval == 0) {
            meta.checkpoint_counter = step / strategy.interval;
            const auto modules = modules_to_save(strategy, spec, meta.checkpoint_counter);
            result.checkpoints.push_back(
                save_checkpoint(out_dir, spec, table, state, meta, num_ranks, modules));
        }
    }
    result.state = std::move(state);
    result.meta = meta;
    return result;
}

} // namespace

TrainResult train(const TrainRunConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    require_fresh_dir(out_dir);

    const GroupTable table =
        cfg.grouping == Grouping::Fine ? build_group_table(cfg.spec) : build_coarse_table(cfg.spec);
    OptimizerState state = init_state(cfg.spec, table, cfg.hyper, cfg.spec.seed);

    TrainerMeta meta;
    meta.lr = cfg.hyper.lr;
    meta.strategy = cfg.strategy;
    meta.rng_seed = cfg.spec.seed;
    return run_loop(cfg.spec, table, std::move(state), OptimizerStepCounter{}, meta, cfg.strategy,
                    cfg.num_ranks, 0, cfg.total_steps, out_dir);
}

TrainResult resume(const std::filesystem::path& checkpoint_dir, int additional_steps,
                   const std::filesystem::path& out_dir) {
    if (additional_steps < 0) fail(ErrorKind::Recipe, "additional_steps must be >= 0");
    CheckpointData data = read_checkpoint(checkpoint_dir);

    if (!data.manifest.is_complete(data.spec)) {
        std::string missing;
        for (const auto& m : enumerate_modules(data.spec))
            if (!data.manifest.contains(m)) missing += (missing.empty() ? "" : ", ") + module_name(m);
        fail(ErrorKind::MissingModules,
             "checkpoint '" + checkpoint_dir.string() + "' is partial (missing " + missing +
                 "); assemble a complete checkpoint with the merge command first");
    }
    if (data.trainer.rng_seed != data.spec.seed)
        fail(ErrorKind::Consistency, "trainer rng_seed disagrees with the model config seed");

    require_fresh_dir(out_dir);

    // Masters and moments are authoritative; order the groups by index.
    OptimizerState state;
    state.reserve(data.groups.size());
    for (int g = 0; g < data.table.group_count(); ++g) state.push_back(std::move(data.groups.at(g)));

    OptimizerStepCounter counter{data.trainer.optimizer_t};
    return run_loop(data.spec, data.table, std::move(state), counter, data.trainer,
                    data.trainer.strategy, data.num_ranks, data.trainer.step,
                    data.trainer.step + additional_steps, out_dir);
}

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& run_dir) {
    if (!std::filesystem::exists(run_dir))
        fail(ErrorKind::MissingArtifact, "run directory '" + run_dir.string() + "' does not exist");
    std::vector<std::pair<std::int64_t, std::filesystem::path>> found;
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
        if (!entry.is_directory()) continue;
        if (auto step = parse_checkpoint_dir_name(entry.path().filename().string()))
            found.emplace_back(*step, entry.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<std::filesystem::path> out;
    out.reserve(found.size());
    for (auto& [step, path] : found) out.push_back(std::move(path));
    return out;
}

void inject_failure(const std::filesystem::path& run_dir, std::int64_t at_step) {
    for (const auto& dir : list_checkpoints(run_dir)) {
        const auto step = parse_checkpoint_dir_name(dir.filename().string());
        if (step && *step > at_step) {
            std::error_code ec;
            std::filesystem::remove_all(dir, ec);
            if (ec) fail(ErrorKind::Storage, "cannot remove '" + dir.string() + "': " + ec.message());
        }
    }

    // Cut the step log at the failure point as well.
    const auto log_path = run_dir / "log.jsonl";
    if (!std::filesystem::exists(log_path)) return;
    std::ifstream in(log_path, std::ios::binary);
    std::string line, kept;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("step") || j.at("step").get<std::int64_t>() > at_step) break;
        kept += line + "\n";
    }
    in.close();
    write_text_file(log_path, kept);
}

} // namespace tailor
