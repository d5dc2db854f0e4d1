// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "tailor/checkpoint.hpp"
#include "tailor/gradients.hpp"
#include "tailor/groups.hpp"
#include "tailor/model.hpp"
#include "tailor/trainer.hpp"

namespace tailor::test {

/// Self-cleaning unique temp directory.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<unsigned> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        path = base / ("tailor-test-" + std::to_string(::getpid()) + "-" +
                       std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path sub(const std::string& name) const { return path / name; }
};

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline bool files_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
    return slurp(a) == slurp(b);
}

/// Relative path -> file bytes, for whole-directory comparison.
inline std::map<std::string, std::vector<std::uint8_t>> dir_contents(const std::filesystem::path& root) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.is_regular_file())
            out[std::filesystem::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

inline bool dirs_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
    return dir_contents(a) == dir_contents(b);
}

inline ModelSpec toy_spec(int layers = 4, bool tied = false, std::uint64_t seed = 42,
                          int hidden = 8, int ffn = 16, int vocab = 32) {
    ModelSpec spec;
    spec.num_layers = layers;
    spec.hidden_dim = hidden;
    spec.ffn_dim = ffn;
    spec.vocab_size = vocab;
    spec.weight_tied = tied;
    spec.seed = seed;
    return spec;
}

inline bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

inline bool states_equal(const GroupState& a, const GroupState& b) {
    return bits_equal(a.master, b.master) && bits_equal(a.exp_avg, b.exp_avg) &&
           bits_equal(a.exp_avg_sq, b.exp_avg_sq) && a.hyper == b.hyper;
}

/// Random but valid optimizer state (exp_avg_sq kept non-negative).
inline OptimizerState random_state(const ModelSpec& spec, const GroupTable& table,
                                   std::mt19937_64& rng, const AdamHyperparams& base = {}) {
    std::uniform_real_distribution<float> value(-2.0f, 2.0f);
    std::uniform_real_distribution<float> variance(0.0f, 1.0f);
    OptimizerState state = zero_state(spec, table, base);
    for (auto& g : state) {
        for (auto& x : g.master) x = value(rng);
        for (auto& x : g.exp_avg) x = value(rng);
        for (auto& x : g.exp_avg_sq) x = variance(rng);
    }
    return state;
}

/// Full-model CheckpointData around an in-memory state.
inline CheckpointData make_checkpoint_data(const ModelSpec& spec, const GroupTable& table,
                                           const OptimizerState& state, std::int64_t step,
                                           int num_ranks, const std::string& strategy_label = "full") {
    CheckpointData data;
    data.spec = spec;
    data.trainer.step = step;
    data.trainer.optimizer_t = step;
    data.trainer.strategy.interval = step > 0 ? static_cast<int>(step) : 1;
    data.trainer.checkpoint_counter = step > 0 ? 1 : 0;
    data.trainer.rng_seed = spec.seed;
    data.manifest.step = step;
    data.manifest.strategy = strategy_label;
    data.manifest.modules = enumerate_modules(spec);
    data.table = table;
    data.num_ranks = num_ranks;
    for (int g = 0; g < table.group_count(); ++g) data.groups.emplace(g, state[static_cast<std::size_t>(g)]);
    data.weights = derive_weights(spec, table, data.groups, data.manifest.modules);
    return data;
}

/// In-memory training from the seeded init, snapshotting requested steps.
/// This is the oracle-side twin of trainer::train (no file I/O).
struct MemoryRun {
    GroupTable table;
    OptimizerState state;
    OptimizerStepCounter counter;
    std::map<std::int64_t, OptimizerState> snapshots;
};

inline MemoryRun run_in_memory(const ModelSpec& spec, std::int64_t steps,
                               const std::vector<std::int64_t>& snapshot_steps = {},
                               Grouping grouping = Grouping::Fine,
                               const AdamHyperparams& base = {1e-3, 0.9, 0.999, 1e-8, 0.01}) {
    MemoryRun run;
    run.table = grouping == Grouping::Fine ? build_group_table(spec) : build_coarse_table(spec);
    run.state = init_state(spec, run.table, base, spec.seed);
    const GradientSource src{spec.seed};
    for (std::int64_t s = 1; s <= steps; ++s) {
        train_step(spec, run.table, run.state, run.counter, src, s);
        for (auto want : snapshot_steps)
            if (want == s) run.snapshots.emplace(s, run.state);
    }
    return run;
}

} // namespace tailor::test
