// SPDX-License-Identifier: Apache-2.0
#include "tailor/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <set>

#include <json.hpp>

#include "tailor/bf16.hpp"
#include "tailor/errors.hpp"

namespace tailor {

using nlohmann::json;

namespace {

std::string pretty(const json& j) {
    return j.dump(2) + "\n";
}

json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::CorruptContainer, origin + ": invalid JSON (" + e.what() + ")");
    }
}

void expect_exact_keys(const json& j, const std::set<std::string>& required,
                       const std::set<std::string>& optional, const std::string& origin) {
    if (!j.is_object()) fail(ErrorKind::CorruptContainer, origin + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!required.count(key) && !optional.count(key))
            fail(ErrorKind::CorruptContainer, origin + ": unexpected key '" + key + "'");
    }
    for (const auto& key : required)
        if (!j.contains(key)) fail(ErrorKind::CorruptContainer, origin + ": missing key '" + key + "'");
}

json strategy_to_json(const StrategyConfig& cfg) {
    json j = {{"kind", strategy_kind_name(cfg.kind)}, {"interval", cfg.interval}};
    if (cfg.kind == StrategyKind::Filter) {
        j["head_count"] = cfg.head_count;
        j["tail_count"] = cfg.tail_count;
        j["sparse_multiple"] = cfg.sparse_multiple;
    }
    return j;
}

StrategyConfig strategy_from_json(const json& j, const std::string& origin) {
    expect_exact_keys(j, {"kind", "interval"}, {"head_count", "tail_count", "sparse_multiple"}, origin);
    StrategyConfig cfg;
    cfg.kind = parse_strategy_kind(j.at("kind").get<std::string>());
    cfg.interval = j.at("interval").get<int>();
    if (j.contains("head_count")) cfg.head_count = j.at("head_count").get<int>();
    if (j.contains("tail_count")) cfg.tail_count = j.at("tail_count").get<int>();
    if (j.contains("sparse_multiple")) cfg.sparse_multiple = j.at("sparse_multiple").get<int>();
    return cfg;
}

const char* decay_name(DecayClass d) {
    return d == DecayClass::Decay ? "decay" : "no_decay";
}

DecayClass parse_decay(const std::string& name, const std::string& origin) {
    if (name == "decay") return DecayClass::Decay;
    if (name == "no_decay") return DecayClass::NoDecay;
    fail(ErrorKind::CorruptContainer, origin + ": unknown decay class '" + name + "'");
}

} // namespace

bool SaveManifest::contains(const ModuleId& m) const {
    return std::find(modules.begin(), modules.end(), m) != modules.end();
}

bool SaveManifest::is_complete(const ModelSpec& spec) const {
    for (const auto& m : enumerate_modules(spec))
        if (!contains(m)) return false;
    return true;
}

const OptimGroupMeta* OptimMeta::find(int group_index) const {
    for (const auto& g : groups)
        if (g.index == group_index) return &g;
    return nullptr;
}

std::string checkpoint_dir_name(std::int64_t step) {
    return "checkpoint-" + std::to_string(step);
}

std::optional<std::int64_t> parse_checkpoint_dir_name(const std::string& name) {
    constexpr std::string_view prefix = "checkpoint-";
    if (!name.starts_with(prefix)) return std::nullopt;
    std::int64_t step = -1;
    const char* begin = name.data() + prefix.size();
    const char* end = name.data() + name.size();
    auto [ptr, ec] = std::from_chars(begin, end, step);
    if (ec != std::errc() || ptr != end || step < 0) return std::nullopt;
    return step;
}

std::filesystem::path weights_path(const std::filesystem::path& dir) { return dir / "model.weights"; }
std::filesystem::path shard_path(const std::filesystem::path& dir, int rank) {
    return dir / "optim" / ("rank_" + std::to_string(rank) + ".shard");
}
std::filesystem::path optim_meta_path(const std::filesystem::path& dir) { return dir / "optim_meta.json"; }
std::filesystem::path config_path(const std::filesystem::path& dir) { return dir / "config.json"; }
std::filesystem::path trainer_state_path(const std::filesystem::path& dir) { return dir / "trainer_state.json"; }
std::filesystem::path manifest_path(const std::filesystem::path& dir) { return dir / "manifest.json"; }

std::string render_config_json(const ModelSpec& spec) {
    json j = {{"num_layers", spec.num_layers}, {"hidden_dim", spec.hidden_dim},
              {"ffn_dim", spec.ffn_dim},       {"vocab_size", spec.vocab_size},
              {"weight_tied", spec.weight_tied}, {"seed", spec.seed}};
    return pretty(j);
}

ModelSpec parse_config_json(const std::string& text, const std::string& origin) {
    const json j = parse_json(text, origin);
    expect_exact_keys(j, {"num_layers", "hidden_dim", "ffn_dim", "vocab_size", "weight_tied", "seed"},
                      {}, origin);
    ModelSpec spec;
    spec.num_layers = j.at("num_layers").get<int>();
    spec.hidden_dim = j.at("hidden_dim").get<int>();
    spec.ffn_dim = j.at("ffn_dim").get<int>();
    spec.vocab_size = j.at("vocab_size").get<int>();
    spec.weight_tied = j.at("weight_tied").get<bool>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

std::string render_trainer_state_json(const TrainerMeta& meta) {
    json j = {{"step", meta.step},
              {"lr", meta.lr},
              {"optimizer_t", meta.optimizer_t},
              {"strategy", strategy_to_json(meta.strategy)},
              {"checkpoint_counter", meta.checkpoint_counter},
              {"rng_seed", meta.rng_seed}};
    return pretty(j);
}

TrainerMeta parse_trainer_state_json(const std::string& text, const std::string& origin) {
    const json j = parse_json(text, origin);
    expect_exact_keys(j, {"step", "lr", "optimizer_t", "strategy", "checkpoint_counter", "rng_seed"},
                      {}, origin);
    TrainerMeta meta;
    meta.step = j.at("step").get<std::int64_t>();
    meta.lr = j.at("lr").get<double>();
    meta.optimizer_t = j.at("optimizer_t").get<std::int64_t>();
    meta.strategy = strategy_from_json(j.at("strategy"), origin + ": strategy");
    meta.checkpoint_counter = j.at("checkpoint_counter").get<std::int64_t>();
    meta.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    return meta;
}

std::string render_manifest_json(const SaveManifest& manifest) {
    json modules = json::array();
    for (const auto& m : manifest.modules) modules.push_back(module_name(m));
    json j = {{"step", manifest.step}, {"strategy", manifest.strategy}, {"modules", std::move(modules)}};
    if (!manifest.provenance.empty()) {
        json prov = json::object();
        for (const auto& [name, p] : manifest.provenance)
            prov[name] = {{"source", p.source}, {"step", p.step}};
        j["provenance"] = std::move(prov);
    }
    return pretty(j);
}

SaveManifest parse_manifest_json(const std::string& text, const std::string& origin) {
    const json j = parse_json(text, origin);
    expect_exact_keys(j, {"step", "strategy", "modules"}, {"provenance"}, origin);
    SaveManifest manifest;
    manifest.step = j.at("step").get<std::int64_t>();
    manifest.strategy = j.at("strategy").get<std::string>();
    for (const auto& name : j.at("modules"))
        manifest.modules.push_back(parse_module_name(name.get<std::string>()));
    if (manifest.modules.empty()) fail(ErrorKind::CorruptContainer, origin + ": empty module list");
    if (j.contains("provenance")) {
        for (const auto& [name, p] : j.at("provenance").items()) {
            expect_exact_keys(p, {"source", "step"}, {}, origin + ": provenance." + name);
            manifest.provenance[name] = {p.at("source").get<std::string>(), p.at("step").get<std::int64_t>()};
        }
    }
    return manifest;
}

std::string render_optim_meta_json(const OptimMeta& meta) {
    json groups = json::array();
    for (const auto& g : meta.groups) {
        groups.push_back({{"index", g.index},
                          {"owner", g.owner},
                          {"decay", decay_name(g.decay)},
                          {"true_length", g.true_length},
                          {"padded_length", g.padded_length},
                          {"shard_length", g.shard_length},
                          {"lr", g.hyper.lr},
                          {"beta1", g.hyper.beta1},
                          {"beta2", g.hyper.beta2},
                          {"eps", g.hyper.eps},
                          {"weight_decay", g.hyper.weight_decay}});
    }
    json j = {{"grouping", meta.grouping == Grouping::Fine ? "fine" : "coarse"},
              {"num_ranks", meta.num_ranks},
              {"step", meta.step},
              {"groups", std::move(groups)}};
    return pretty(j);
}

OptimMeta parse_optim_meta_json(const std::string& text, const std::string& origin) {
    const json j = parse_json(text, origin);
    expect_exact_keys(j, {"grouping", "num_ranks", "step", "groups"}, {}, origin);
    OptimMeta meta;
    const auto grouping = j.at("grouping").get<std::string>();
    if (grouping == "fine") meta.grouping = Grouping::Fine;
    else if (grouping == "coarse") meta.grouping = Grouping::Coarse;
    else fail(ErrorKind::CorruptContainer, origin + ": unknown grouping '" + grouping + "'");
    meta.num_ranks = j.at("num_ranks").get<int>();
    meta.step = j.at("step").get<std::int64_t>();
    for (const auto& g : j.at("groups")) {
        expect_exact_keys(g,
                          {"index", "owner", "decay", "true_length", "padded_length", "shard_length",
                           "lr", "beta1", "beta2", "eps", "weight_decay"},
                          {}, origin + ": groups[]");
        OptimGroupMeta m;
        m.index = g.at("index").get<int>();
        m.owner = g.at("owner").get<std::string>();
        m.decay = parse_decay(g.at("decay").get<std::string>(), origin);
        m.true_length = g.at("true_length").get<std::int64_t>();
        m.padded_length = g.at("padded_length").get<std::int64_t>();
        m.shard_length = g.at("shard_length").get<std::int64_t>();
        m.hyper.lr = g.at("lr").get<double>();
        m.hyper.beta1 = g.at("beta1").get<double>();
        m.hyper.beta2 = g.at("beta2").get<double>();
        m.hyper.eps = g.at("eps").get<double>();
        m.hyper.weight_decay = g.at("weight_decay").get<double>();
        meta.groups.push_back(std::move(m));
    }
    std::sort(meta.groups.begin(), meta.groups.end(),
              [](const OptimGroupMeta& a, const OptimGroupMeta& b) { return a.index < b.index; });
    return meta;
}

OptimMeta build_optim_meta(const GroupTable& table, const std::map<int, GroupState>& groups,
                           const ShardGeometry& geom, std::int64_t step) {
    OptimMeta meta;
    meta.grouping = table.grouping;
    meta.num_ranks = geom.num_ranks;
    meta.step = step;
    for (const auto& [index, state] : groups) {
        if (index < 0 || index >= table.group_count())
            fail(ErrorKind::Geometry, "group index out of range: " + std::to_string(index));
        const GroupInfo& info = table.groups[static_cast<std::size_t>(index)];
        OptimGroupMeta m;
        m.index = index;
        m.owner = info.owner ? module_name(*info.owner) : "coarse";
        m.decay = info.decay;
        m.true_length = info.element_count;
        m.padded_length = geom.padded_length(info.element_count);
        m.shard_length = geom.shard_length(info.element_count);
        m.hyper = state.hyper;
        meta.groups.push_back(std::move(m));
    }
    return meta;
}

std::vector<int> group_indices_for_modules(const GroupTable& table,
                                           const std::vector<ModuleId>& modules) {
    if (table.grouping == Grouping::Coarse) {
        // The coarse layout is not module-separable; it only ever stores the
        // complete model.
        std::vector<int> all;
        for (const auto& g : table.groups) all.push_back(g.index);
        return all;
    }
    std::set<int> indices;
    for (const auto& m : modules)
        for (int g : group_indices_for(table, m)) indices.insert(g);
    return {indices.begin(), indices.end()};
}

TensorContainer derive_weights(const ModelSpec& spec, const GroupTable& table,
                               const std::map<int, GroupState>& groups,
                               const std::vector<ModuleId>& modules) {
    std::set<std::string> wanted;
    for (const auto& m : modules)
        for (const auto& t : tensors_of(spec, m)) wanted.insert(t.name);

    TensorContainer weights;
    for (const auto& [index, state] : groups) {
        for (const auto& slice : group_tensor_slices(spec, table, index)) {
            if (!wanted.count(slice.decl.name)) continue;
            const auto n = static_cast<std::size_t>(slice.decl.element_count());
            std::vector<std::uint8_t> bytes(n * 2);
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint16_t h =
                    bf16_round(state.master[static_cast<std::size_t>(slice.group_offset) + i]);
                bytes[2 * i] = static_cast<std::uint8_t>(h & 0xFF);
                bytes[2 * i + 1] = static_cast<std::uint8_t>(h >> 8);
            }
            weights.add(slice.decl.name, Dtype::BF16, slice.decl.shape, std::move(bytes));
        }
    }
    if (weights.tensors.size() != wanted.size())
        fail(ErrorKind::Consistency, "optimizer groups do not cover the requested modules");
    return weights;
}

namespace {

GroupTable expected_table(const ModelSpec& spec, Grouping grouping) {
    return grouping == Grouping::Fine ? build_group_table(spec) : build_coarse_table(spec);
}

void check_table_matches(const GroupTable& actual, const GroupTable& expected,
                         const std::string& origin) {
    if (actual.grouping != expected.grouping || actual.group_count() != expected.group_count())
        fail(ErrorKind::Geometry, origin + ": group table does not match the model spec");
    for (int g = 0; g < expected.group_count(); ++g) {
        const auto& a = actual.groups[static_cast<std::size_t>(g)];
        const auto& e = expected.groups[static_cast<std::size_t>(g)];
        if (a.index != e.index || a.owner != e.owner || a.decay != e.decay ||
            a.element_count != e.element_count)
            fail(ErrorKind::Geometry, origin + ": group " + std::to_string(g) + " metadata mismatch");
    }
}

void validate_checkpoint_data(const CheckpointData& data) {
    data.spec.validate();
    if (data.num_ranks < 1) fail(ErrorKind::Geometry, "num_ranks must be >= 1");
    if (data.manifest.modules.empty()) fail(ErrorKind::Consistency, "manifest module list is empty");
    if (data.manifest.step != data.trainer.step)
        fail(ErrorKind::Consistency, "manifest step disagrees with trainer state");

    check_table_matches(data.table, expected_table(data.spec, data.table.grouping), "checkpoint");

    std::set<ModuleId> seen;
    for (const auto& m : data.manifest.modules) {
        if (!module_valid(data.spec, m))
            fail(ErrorKind::InvalidModule, "manifest names module '" + module_name(m) + "' not in the model");
        if (!seen.insert(m).second)
            fail(ErrorKind::Consistency, "manifest lists module '" + module_name(m) + "' twice");
    }
    if (data.table.grouping == Grouping::Coarse && !data.manifest.is_complete(data.spec))
        fail(ErrorKind::Geometry, "coarse-grouped checkpoints must contain the complete model");

    const auto required = group_indices_for_modules(data.table, data.manifest.modules);
    if (data.groups.size() != required.size())
        fail(ErrorKind::Consistency, "optimizer state does not cover exactly the saved modules");
    for (int g : required) {
        auto it = data.groups.find(g);
        if (it == data.groups.end())
            fail(ErrorKind::Consistency, "optimizer state missing group " + std::to_string(g));
        const GroupState& state = it->second;
        state.validate();
        state.hyper.validate();
        const GroupInfo& info = data.table.groups[static_cast<std::size_t>(g)];
        if (state.length() != info.element_count)
            fail(ErrorKind::Geometry, "group " + std::to_string(g) + " has length " +
                                          std::to_string(state.length()) + ", expected " +
                                          std::to_string(info.element_count));
        if (info.decay == DecayClass::NoDecay && state.hyper.weight_decay != 0.0)
            fail(ErrorKind::Consistency, "no-decay group " + std::to_string(g) + " carries weight decay");
    }

    // Weight/master duality: the BF16 container must equal the rounded
    // masters, elementwise.
    const TensorContainer derived = derive_weights(data.spec, data.table, data.groups, data.manifest.modules);
    if (derived.tensors.size() != data.weights.tensors.size())
        fail(ErrorKind::Consistency, "weight container tensor set does not match the manifest");
    for (const auto& [name, entry] : derived.tensors) {
        const TensorEntry& actual = data.weights.at(name);
        if (actual.dtype != entry.dtype || actual.shape != entry.shape)
            fail(ErrorKind::Geometry, "weight tensor '" + name + "' has unexpected dtype/shape");
        if (actual.bytes != entry.bytes)
            fail(ErrorKind::Consistency, "weight tensor '" + name + "' is not the rounded master");
    }
}

} // namespace

void write_checkpoint(const std::filesystem::path& dir, const CheckpointData& data) {
    validate_checkpoint_data(data);
    const ShardGeometry geom{data.num_ranks};

    std::error_code ec;
    std::filesystem::create_directories(dir / "optim", ec);
    if (ec) fail(ErrorKind::Storage, "cannot create '" + (dir / "optim").string() + "': " + ec.message());

    write_container(weights_path(dir), data.weights);

    // Shard every group once, then emit one container per rank.
    std::map<int, std::vector<std::vector<float>>> shards;
    for (const auto& [g, state] : data.groups) shards.emplace(g, shard_group(state.master, geom));
    std::map<int, std::vector<std::vector<float>>> shards_m;
    std::map<int, std::vector<std::vector<float>>> shards_v;
    for (const auto& [g, state] : data.groups) {
        shards_m.emplace(g, shard_group(state.exp_avg, geom));
        shards_v.emplace(g, shard_group(state.exp_avg_sq, geom));
    }
    for (int r = 0; r < data.num_ranks; ++r) {
        TensorContainer shard;
        shard.metadata = {{"num_ranks", std::to_string(data.num_ranks)}, {"rank", std::to_string(r)}};
        for (const auto& [g, state] : data.groups) {
            const std::string key = "g" + std::to_string(g);
            const auto chunk = geom.shard_length(state.length());
            shard.add(key + ".master", Dtype::F32, {chunk},
                      floats_to_bytes(shards.at(g)[static_cast<std::size_t>(r)]));
            shard.add(key + ".exp_avg", Dtype::F32, {chunk},
                      floats_to_bytes(shards_m.at(g)[static_cast<std::size_t>(r)]));
            shard.add(key + ".exp_avg_sq", Dtype::F32, {chunk},
                      floats_to_bytes(shards_v.at(g)[static_cast<std::size_t>(r)]));
        }
        write_container(shard_path(dir, r), shard);
    }

    write_text_file(optim_meta_path(dir),
                    render_optim_meta_json(build_optim_meta(data.table, data.groups, geom,
                                                            data.trainer.optimizer_t)));
    write_text_file(config_path(dir), render_config_json(data.spec));
    write_text_file(trainer_state_path(dir), render_trainer_state_json(data.trainer));
    write_text_file(manifest_path(dir), render_manifest_json(data.manifest));
}

namespace {

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

} // namespace

CheckpointSummary read_checkpoint_summary(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir))
        fail(ErrorKind::MissingArtifact, "checkpoint directory '" + dir.string() + "' does not exist");

    CheckpointSummary s;
    s.dir = dir;
    s.spec = parse_config_json(read_text(config_path(dir)), config_path(dir).string());
    s.trainer = parse_trainer_state_json(read_text(trainer_state_path(dir)), trainer_state_path(dir).string());
    s.manifest = parse_manifest_json(read_text(manifest_path(dir)), manifest_path(dir).string());
    s.optim = parse_optim_meta_json(read_text(optim_meta_path(dir)), optim_meta_path(dir).string());

    if (s.manifest.step != s.trainer.step)
        fail(ErrorKind::Consistency, dir.string() + ": manifest step disagrees with trainer state");
    if (s.optim.step != s.trainer.optimizer_t)
        fail(ErrorKind::Consistency, dir.string() + ": optim_meta step disagrees with trainer state");
    if (s.optim.num_ranks < 1) fail(ErrorKind::Geometry, dir.string() + ": invalid rank count");

    for (const auto& m : s.manifest.modules)
        if (!module_valid(s.spec, m))
            fail(ErrorKind::Geometry, dir.string() + ": manifest names module '" + module_name(m) +
                                          "' not in the model");

    // The stored group records must agree with the table this spec implies.
    const GroupTable table = expected_table(s.spec, s.optim.grouping);
    const ShardGeometry geom{s.optim.num_ranks};
    const auto required = group_indices_for_modules(table, s.manifest.modules);
    if (s.optim.groups.size() != required.size())
        fail(ErrorKind::Geometry, dir.string() + ": optim_meta group set does not match the manifest");
    for (std::size_t i = 0; i < required.size(); ++i) {
        const OptimGroupMeta& g = s.optim.groups[i];
        if (g.index != required[i])
            fail(ErrorKind::Geometry, dir.string() + ": optim_meta group set does not match the manifest");
        const GroupInfo& info = table.groups[static_cast<std::size_t>(g.index)];
        const std::string expected_owner = info.owner ? module_name(*info.owner) : "coarse";
        if (g.owner != expected_owner || g.decay != info.decay || g.true_length != info.element_count)
            fail(ErrorKind::Geometry, dir.string() + ": group " + std::to_string(g.index) +
                                          " metadata does not match the model spec");
        if (g.padded_length != geom.padded_length(g.true_length) ||
            g.shard_length != geom.shard_length(g.true_length))
            fail(ErrorKind::Geometry, dir.string() + ": group " + std::to_string(g.index) +
                                          " sharding lengths do not match the rank count");
        g.hyper.validate();
    }
    return s;
}

CheckpointData read_checkpoint(const std::filesystem::path& dir) {
    const CheckpointSummary summary = read_checkpoint_summary(dir);

    CheckpointData data;
    data.spec = summary.spec;
    data.trainer = summary.trainer;
    data.manifest = summary.manifest;
    data.table = expected_table(summary.spec, summary.optim.grouping);
    data.num_ranks = summary.optim.num_ranks;

    // The optim directory must contain exactly rank_0..rank_{N-1}.
    const auto optim_dir = dir / "optim";
    if (!std::filesystem::exists(optim_dir))
        fail(ErrorKind::MissingArtifact, "'" + optim_dir.string() + "' does not exist");
    std::size_t shard_files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(optim_dir)) ++shard_files;
    if (shard_files != static_cast<std::size_t>(data.num_ranks))
        fail(ErrorKind::Geometry, dir.string() + ": found " + std::to_string(shard_files) +
                                      " shard files for " + std::to_string(data.num_ranks) + " ranks");

    std::vector<TensorContainer> shards;
    shards.reserve(static_cast<std::size_t>(data.num_ranks));
    for (int r = 0; r < data.num_ranks; ++r) {
        TensorContainer c = read_container(shard_path(dir, r));
        auto meta_rank = c.metadata.find("rank");
        if (meta_rank != c.metadata.end() && meta_rank->second != std::to_string(r))
            fail(ErrorKind::CorruptContainer, shard_path(dir, r).string() + ": rank metadata mismatch");
        shards.push_back(std::move(c));
    }

    for (const auto& g : summary.optim.groups) {
        const std::string key = "g" + std::to_string(g.index);
        GroupState state;
        state.hyper = g.hyper;
        auto gather = [&](const char* field) {
            std::vector<std::vector<float>> chunks;
            chunks.reserve(shards.size());
            for (int r = 0; r < data.num_ranks; ++r) {
                const std::string name = key + field;
                const auto& shard = shards[static_cast<std::size_t>(r)];
                if (!shard.has(name))
                    fail(ErrorKind::CorruptContainer,
                         shard_path(dir, r).string() + ": missing tensor '" + name + "'");
                const TensorEntry& entry = shard.at(name);
                if (entry.dtype != Dtype::F32 || entry.shape != std::vector<std::int64_t>{g.shard_length})
                    fail(ErrorKind::Geometry,
                         shard_path(dir, r).string() + ": tensor '" + name + "' has unexpected dtype/shape");
                chunks.push_back(bytes_to_floats(entry.bytes));
            }
            // Reassemble with padding intact, verify the pad is zero on disk,
            // then drop it.
            std::vector<float> padded = unshard_group(chunks, g.padded_length);
            for (std::int64_t i = g.true_length; i < g.padded_length; ++i) {
                float v = padded[static_cast<std::size_t>(i)];
                std::uint32_t bits;
                std::memcpy(&bits, &v, sizeof(bits));
                if (bits != 0)
                    fail(ErrorKind::CorruptContainer,
                         dir.string() + ": nonzero padding in group " + std::to_string(g.index));
            }
            padded.resize(static_cast<std::size_t>(g.true_length));
            return padded;
        };
        state.master = gather(".master");
        state.exp_avg = gather(".exp_avg");
        state.exp_avg_sq = gather(".exp_avg_sq");
        state.validate();
        data.groups.emplace(g.index, std::move(state));
    }

    data.weights = read_container(weights_path(dir));

    // Cross-file invariants: exact tensor set and weight/master duality.
    const TensorContainer derived =
        derive_weights(data.spec, data.table, data.groups, data.manifest.modules);
    for (const auto& [name, entry] : derived.tensors) {
        if (!data.weights.has(name))
            fail(ErrorKind::CorruptContainer, weights_path(dir).string() + ": missing tensor '" + name + "'");
        const TensorEntry& actual = data.weights.at(name);
        if (actual.dtype != entry.dtype || actual.shape != entry.shape)
            fail(ErrorKind::Geometry, weights_path(dir).string() + ": tensor '" + name +
                                          "' has unexpected dtype/shape");
        if (actual.bytes != entry.bytes)
            fail(ErrorKind::Consistency, dir.string() + ": weight tensor '" + name +
                                             "' disagrees with its FP32 master");
    }
    if (data.weights.tensors.size() != derived.tensors.size())
        fail(ErrorKind::CorruptContainer, weights_path(dir).string() + ": contains tensors not in the manifest");

    return data;
}

} // namespace tailor
