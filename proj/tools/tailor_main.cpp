// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface for the checkpoint tailoring toolkit:
//   train        deterministic toy training run with (partial) checkpointing
//   plan         auto-generate a merge recipe from a run's manifests
//   merge        assemble a composite checkpoint from a YAML recipe
//   resume       continue training from a complete checkpoint
//   inspect      show a checkpoint's modules, provenance and size structure
//   verify       compare two checkpoints module by module, bitwise
//   size-report  measured (and expected) storage of a run's checkpoints
//
// Exit codes: 0 success, 1 user error, 2 internal/consistency error.
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tailor/checkpoint.hpp"
#include "tailor/errors.hpp"
#include "tailor/merge.hpp"
#include "tailor/recipe.hpp"
#include "tailor/report.hpp"
#include "tailor/strategy.hpp"
#include "tailor/trainer.hpp"
#include "tailor/verify.hpp"

namespace {

using nlohmann::json;
using namespace tailor;

std::string read_text_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

int cmd_train(const std::string& config, int steps, int interval, const std::string& strategy,
              int ranks, const std::string& out, const std::string& grouping, double lr,
              double weight_decay, int head, int tail, int sparse_multiple) {
    TrainRunConfig cfg;
    cfg.spec = parse_config_json(read_text_file(config), config);
    cfg.strategy.kind = parse_strategy_kind(strategy);
    cfg.strategy.interval = interval;
    cfg.strategy.head_count = head;
    cfg.strategy.tail_count = tail;
    cfg.strategy.sparse_multiple = sparse_multiple;
    cfg.total_steps = steps;
    cfg.num_ranks = ranks;
    if (grouping == "fine") cfg.grouping = Grouping::Fine;
    else if (grouping == "coarse") cfg.grouping = Grouping::Coarse;
    else fail(ErrorKind::Recipe, "unknown grouping '" + grouping + "' (expected fine or coarse)");
    cfg.hyper.lr = lr;
    cfg.hyper.weight_decay = weight_decay;

    const TrainResult result = train(cfg, out);
    std::cout << "trained " << steps << " steps (" << strategy << ", interval " << interval
              << ", ranks " << ranks << ")\n";
    for (const auto& c : result.checkpoints) std::cout << "  wrote " << c.string() << "\n";
    std::cout << "final step " << result.meta.step << ", run directory " << out << "\n";
    return 0;
}

int cmd_plan(const std::string& run, std::int64_t failure_step, const std::string& out) {
    const MergeRecipe recipe = recipe_from_manifests(run, failure_step);
    const std::string yaml = recipe_to_yaml(recipe);
    write_text_file(out, yaml);
    std::cout << "recipe for failure at step " << failure_step << " written to " << out << "\n";
    std::cout << yaml;
    return 0;
}

int cmd_merge(const std::string& recipe_path, const std::string& out, int workers, bool uncached,
              bool as_json) {
    const MergeRecipe recipe = read_recipe_file(recipe_path);
    const MergePlan plan = resolve_plan(recipe);
    MergeOptions options;
    options.workers = workers;
    options.uncached = uncached;
    const MergeStats stats = execute_merge(plan, out, options);

    if (as_json) {
        std::cout << json{{"out", out},
                          {"num_ranks", plan.num_ranks},
                          {"num_sources", plan.sources.size()},
                          {"shard_files_read", stats.shard_files_read},
                          {"weight_files_read", stats.weight_files_read},
                          {"wall_ms", stats.wall_ms}}
                         .dump()
                  << "\n";
        return 0;
    }
    std::cout << "merged checkpoint written to " << out << "\n";
    std::cout << "sources: " << plan.sources.size() << "  ranks: " << plan.num_ranks << "\n";
    std::cout << "optimizer shard files read: " << stats.shard_files_read << " (bound "
              << plan.num_ranks << " x " << plan.sources.size() << " = "
              << plan.num_ranks * static_cast<int>(plan.sources.size()) << " cached)\n";
    std::cout << "weight files read: " << stats.weight_files_read << "\n";
    std::cout << "wall time: " << stats.wall_ms << " ms\n";
    return 0;
}

int cmd_resume(const std::string& ckpt, int steps, const std::string& out) {
    const TrainResult result = resume(ckpt, steps, out);
    std::cout << "resumed from " << ckpt << " for " << steps << " steps\n";
    for (const auto& c : result.checkpoints) std::cout << "  wrote " << c.string() << "\n";
    std::cout << "final step " << result.meta.step << ", run directory " << out << "\n";
    return 0;
}

int cmd_inspect(const std::string& ckpt, bool as_json) {
    const CheckpointSummary summary = read_checkpoint_summary(ckpt);
    const CheckpointSizes sizes = measure_checkpoint(ckpt);

    json modules = json::object();
    for (const auto& m : summary.manifest.modules) {
        const std::string name = module_name(m);
        auto it = summary.manifest.provenance.find(name);
        if (it != summary.manifest.provenance.end())
            modules[name] = {{"source", it->second.source}, {"step", it->second.step}};
        else
            modules[name] = {{"source", "self"}, {"step", summary.trainer.step}};
    }

    if (as_json) {
        std::cout << json{{"checkpoint", ckpt},
                          {"step", summary.trainer.step},
                          {"optimizer_t", summary.trainer.optimizer_t},
                          {"strategy", summary.manifest.strategy},
                          {"num_ranks", summary.optim.num_ranks},
                          {"modules", modules},
                          {"sizes",
                           {{"total_bytes", sizes.total_bytes},
                            {"weights_file_bytes", sizes.weights_file_bytes},
                            {"optim_file_bytes", sizes.optim_file_bytes},
                            {"optim_payload_bytes", sizes.optim_payload_bytes},
                            {"sidecar_bytes", sizes.sidecar_bytes},
                            {"total_to_weights_ratio", sizes.total_to_weights_ratio()}}}}
                         .dump()
                  << "\n";
        return 0;
    }

    const ModelSpec& spec = summary.spec;
    std::cout << "checkpoint: " << ckpt << "\n";
    std::cout << "step " << summary.trainer.step << ", optimizer_t " << summary.trainer.optimizer_t
              << ", strategy " << summary.manifest.strategy << ", counter "
              << summary.trainer.checkpoint_counter << "\n";
    std::cout << "model: L=" << spec.num_layers << " hidden=" << spec.hidden_dim
              << " ffn=" << spec.ffn_dim << " vocab=" << spec.vocab_size
              << " tied=" << (spec.weight_tied ? "true" : "false") << "\n";
    std::cout << "ranks: " << summary.optim.num_ranks << ", groups stored: " << summary.optim.groups.size()
              << "\n";
    std::cout << "modules (" << summary.manifest.modules.size() << "/" << spec.module_count() << "):\n";
    for (const auto& m : summary.manifest.modules) {
        const std::string name = module_name(m);
        auto it = summary.manifest.provenance.find(name);
        std::cout << "  " << name << "  <- "
                  << (it != summary.manifest.provenance.end()
                          ? it->second.source + " @ step " + std::to_string(it->second.step)
                          : "self @ step " + std::to_string(summary.trainer.step))
                  << "\n";
    }
    std::cout << "sizes: total=" << sizes.total_bytes << " weights=" << sizes.weights_file_bytes
              << " optim_files=" << sizes.optim_file_bytes << " optim_payload=" << sizes.optim_payload_bytes
              << " sidecars=" << sizes.sidecar_bytes << "\n";
    std::cout << "total/weights ratio: " << sizes.total_to_weights_ratio() << "\n";
    return 0;
}

int cmd_verify(const std::string& a, const std::string& b, const std::string& modules_csv,
               bool as_json) {
    std::optional<std::vector<ModuleId>> filter;
    if (!modules_csv.empty()) {
        std::vector<ModuleId> modules;
        std::stringstream ss(modules_csv);
        std::string item;
        while (std::getline(ss, item, ',')) modules.push_back(parse_module_name(item));
        filter = std::move(modules);
    }
    const VerifyResult result = verify_checkpoints(a, b, filter);

    if (as_json) {
        std::cout << json{{"equal", result.equal},
                          {"compared_modules", result.compared.size()},
                          {"first_divergence", result.first_divergence}}
                         .dump()
                  << "\n";
    } else if (result.equal) {
        std::cout << "checkpoints are bitwise-equal over " << result.compared.size() << " modules\n";
    } else {
        std::cout << "divergence: " << result.first_divergence << "\n";
    }
    return result.equal ? 0 : 1;
}

int cmd_size_report(const std::string& run, bool as_json) {
    const RunSizes sizes = measure_run(run);

    // Expected bytes are computable when the run is an unmodified strategy
    // run: uniform strategy and counters 1..n.
    std::optional<std::int64_t> expected;
    const auto dirs = list_checkpoints(run);
    if (!dirs.empty()) {
        bool uniform = true;
        CheckpointSummary first = read_checkpoint_summary(dirs.front());
        AdamHyperparams base;
        bool base_set = false;
        for (const auto& g : first.optim.groups)
            if (g.decay == DecayClass::Decay) {
                base = g.hyper;
                base_set = true;
                break;
            }
        if (!base_set && !first.optim.groups.empty()) base = first.optim.groups.front().hyper;
        for (std::size_t i = 0; i < dirs.size() && uniform; ++i) {
            const CheckpointSummary s = read_checkpoint_summary(dirs[i]);
            uniform = s.manifest.strategy == strategy_kind_name(s.trainer.strategy.kind) &&
                      s.trainer.strategy == first.trainer.strategy &&
                      s.trainer.checkpoint_counter == static_cast<std::int64_t>(i + 1) &&
                      s.spec == first.spec && s.optim.num_ranks == first.optim.num_ranks;
        }
        if (uniform)
            expected = expected_run_bytes(first.trainer.strategy, first.spec,
                                          static_cast<int>(dirs.size()),
                                          ShardGeometry{first.optim.num_ranks}, base);
    }

    if (as_json) {
        json checkpoints = json::array();
        for (const auto& c : sizes.checkpoints)
            checkpoints.push_back({{"step", c.step},
                                   {"total_bytes", c.total_bytes},
                                   {"weights_file_bytes", c.weights_file_bytes},
                                   {"optim_file_bytes", c.optim_file_bytes},
                                   {"optim_payload_bytes", c.optim_payload_bytes},
                                   {"sidecar_bytes", c.sidecar_bytes},
                                   {"total_to_weights_ratio", c.total_to_weights_ratio()}});
        json j = {{"run", run}, {"checkpoints", checkpoints}, {"total_bytes", sizes.total_bytes}};
        j["expected_bytes"] = expected ? json(*expected) : json(nullptr);
        std::cout << j.dump() << "\n";
        return 0;
    }

    std::cout << "run: " << run << "\n";
    for (const auto& c : sizes.checkpoints)
        std::cout << "  checkpoint-" << c.step << ": " << c.total_bytes << " bytes (weights "
                  << c.weights_file_bytes << ", ratio " << c.total_to_weights_ratio() << ")\n";
    std::cout << "total: " << sizes.total_bytes << " bytes over " << sizes.checkpoints.size()
              << " checkpoints\n";
    if (expected) std::cout << "expected (analytic): " << *expected << " bytes\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-wise checkpoint split & merge toolkit"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "run the deterministic toy trainer");
    std::string train_config, train_strategy = "full", train_out, train_grouping = "fine";
    int train_steps = 0, train_interval = 50, train_ranks = 1;
    int train_head = 2, train_tail = 2, train_sparse = 5;
    double train_lr = kDefaultLr, train_wd = kDefaultWeightDecay;
    train_cmd->add_option("--config", train_config, "model config JSON")->required();
    train_cmd->add_option("--steps", train_steps, "total training steps")->required();
    train_cmd->add_option("--interval", train_interval, "steps between checkpoints")->required();
    train_cmd->add_option("--strategy", train_strategy, "full | parity | filter")->required();
    train_cmd->add_option("--ranks", train_ranks, "simulated data-parallel ranks")->required();
    train_cmd->add_option("--out", train_out, "run directory")->required();
    train_cmd->add_option("--grouping", train_grouping, "fine | coarse (default fine)");
    train_cmd->add_option("--lr", train_lr, "learning rate");
    train_cmd->add_option("--weight-decay", train_wd, "decay-group weight decay");
    train_cmd->add_option("--head", train_head, "filter: leading layers saved every time");
    train_cmd->add_option("--tail", train_tail, "filter: trailing layers saved every time");
    train_cmd->add_option("--sparse-multiple", train_sparse, "filter: middle layers every k-th checkpoint");

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "generate a merge recipe from run manifests");
    std::string plan_run, plan_out;
    std::int64_t plan_failure = 0;
    plan_cmd->add_option("--run", plan_run, "run directory")->required();
    plan_cmd->add_option("--failure-step", plan_failure, "simulated failure step")->required();
    plan_cmd->add_option("--out", plan_out, "output recipe path")->required();

    // merge
    auto* merge_cmd = app.add_subcommand("merge", "assemble a composite checkpoint from a recipe");
    std::string merge_recipe, merge_out;
    int merge_workers = 0;
    bool merge_uncached = false, merge_json = false;
    merge_cmd->add_option("--recipe", merge_recipe, "recipe YAML")->required();
    merge_cmd->add_option("--out", merge_out, "output checkpoint directory")->required();
    merge_cmd->add_option("--workers", merge_workers, "parallel shard loads (default: num_ranks; 1 = serial)");
    merge_cmd->add_flag("--uncached", merge_uncached, "reload source shards per group (benchmark mode)");
    merge_cmd->add_flag("--json", merge_json, "machine-readable output");

    // resume
    auto* resume_cmd = app.add_subcommand("resume", "continue training from a complete checkpoint");
    std::string resume_ckpt, resume_out;
    int resume_steps = 0;
    resume_cmd->add_option("--ckpt", resume_ckpt, "checkpoint directory")->required();
    resume_cmd->add_option("--steps", resume_steps, "additional steps")->required();
    resume_cmd->add_option("--out", resume_out, "output run directory")->required();

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "show checkpoint contents and size structure");
    std::string inspect_ckpt;
    bool inspect_json = false;
    inspect_cmd->add_option("--ckpt", inspect_ckpt, "checkpoint directory")->required();
    inspect_cmd->add_flag("--json", inspect_json, "machine-readable output");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "compare two checkpoints bitwise");
    std::string verify_a, verify_b, verify_modules;
    bool verify_json = false;
    verify_cmd->add_option("--a", verify_a, "first checkpoint")->required();
    verify_cmd->add_option("--b", verify_b, "second checkpoint")->required();
    verify_cmd->add_option("--modules", verify_modules, "comma-separated module subset");
    verify_cmd->add_flag("--json", verify_json, "machine-readable output");

    // size-report
    auto* size_cmd = app.add_subcommand("size-report", "measured checkpoint storage of a run");
    std::string size_run;
    bool size_json = false;
    size_cmd->add_option("--run", size_run, "run directory")->required();
    size_cmd->add_flag("--json", size_json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(train_config, train_steps, train_interval, train_strategy, train_ranks,
                             train_out, train_grouping, train_lr, train_wd, train_head, train_tail,
                             train_sparse);
        if (plan_cmd->parsed()) return cmd_plan(plan_run, plan_failure, plan_out);
        if (merge_cmd->parsed())
            return cmd_merge(merge_recipe, merge_out, merge_workers, merge_uncached, merge_json);
        if (resume_cmd->parsed()) return cmd_resume(resume_ckpt, resume_steps, resume_out);
        if (inspect_cmd->parsed()) return cmd_inspect(inspect_ckpt, inspect_json);
        if (verify_cmd->parsed()) return cmd_verify(verify_a, verify_b, verify_modules, verify_json);
        if (size_cmd->parsed()) return cmd_size_report(size_run, size_json);
    } catch (const TailorError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_user_error() ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
