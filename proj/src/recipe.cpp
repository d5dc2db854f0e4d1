// SPDX-License-Identifier: Apache-2.0
#include "tailor/recipe.hpp"

#include <set>

#include <yaml-cpp/yaml.h>

#include "tailor/container.hpp"
#include "tailor/errors.hpp"

namespace tailor {

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    fail(ErrorKind::Recipe, path + ": " + what);
}

void expect_map(const YAML::Node& node, const std::string& path) {
    if (!node.IsMap()) bad(path, "expected a mapping");
}

std::string scalar(const YAML::Node& node, const std::string& path) {
    if (!node.IsScalar()) bad(path, "expected a scalar");
    return node.as<std::string>();
}

int integer(const YAML::Node& node, const std::string& path) {
    if (!node.IsScalar()) bad(path, "expected an integer");
    try {
        return node.as<int>();
    } catch (const YAML::Exception&) {
        bad(path, "expected an integer, got '" + node.as<std::string>() + "'");
    }
}

void reject_unknown_keys(const YAML::Node& node, const std::set<std::string>& known,
                         const std::string& path) {
    for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (!known.count(key)) bad(path.empty() ? key : path + "." + key, "unknown key");
    }
}

std::vector<int> parse_layers(const YAML::Node& node, const std::string& path) {
    std::vector<int> layers;
    if (node.IsSequence()) {
        for (std::size_t i = 0; i < node.size(); ++i)
            layers.push_back(integer(node[i], path + "[" + std::to_string(i) + "]"));
    } else if (node.IsMap()) {
        reject_unknown_keys(node, {"start", "end"}, path);
        if (!node["start"] || !node["end"]) bad(path, "range needs both start and end");
        const int start = integer(node["start"], path + ".start");
        const int end = integer(node["end"], path + ".end"); // half-open
        if (start < 0 || end <= start) bad(path, "range must satisfy 0 <= start < end");
        for (int i = start; i < end; ++i) layers.push_back(i);
    } else {
        bad(path, "expected a list of indices or a {start, end} range");
    }
    for (int l : layers)
        if (l < 0) bad(path, "layer indices are 0-based and must be >= 0");
    return layers;
}

} // namespace

MergeRecipe parse_recipe(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        fail(ErrorKind::Recipe, std::string("invalid YAML: ") + e.what());
    }
    expect_map(root, "recipe");
    reject_unknown_keys(root, {"merge_method", "base_checkpoint", "num_ranks", "slices", "aux", "config_from"},
                        "");

    MergeRecipe recipe;
    if (!root["merge_method"]) bad("merge_method", "missing (only 'passthrough' is supported)");
    if (const auto method = scalar(root["merge_method"], "merge_method"); method != "passthrough")
        bad("merge_method", "'" + method + "' is not supported (only 'passthrough')");

    if (root["base_checkpoint"]) recipe.base_checkpoint = scalar(root["base_checkpoint"], "base_checkpoint");

    if (!root["num_ranks"]) bad("num_ranks", "missing");
    recipe.num_ranks = integer(root["num_ranks"], "num_ranks");
    if (recipe.num_ranks < 1) bad("num_ranks", "must be >= 1");

    if (root["slices"]) {
        const YAML::Node& slices = root["slices"];
        if (!slices.IsSequence()) bad("slices", "expected a list");
        for (std::size_t i = 0; i < slices.size(); ++i) {
            const std::string path = "slices[" + std::to_string(i) + "]";
            const YAML::Node& s = slices[i];
            expect_map(s, path);
            reject_unknown_keys(s, {"source", "layers", "targets"}, path);
            RecipeSlice slice;
            if (!s["source"]) bad(path + ".source", "missing");
            slice.source = scalar(s["source"], path + ".source");
            if (!s["layers"]) bad(path + ".layers", "missing");
            slice.layers = parse_layers(s["layers"], path + ".layers");
            if (s["targets"]) {
                const YAML::Node& t = s["targets"];
                if (!t.IsSequence()) bad(path + ".targets", "expected a list");
                for (std::size_t k = 0; k < t.size(); ++k)
                    slice.targets.push_back(integer(t[k], path + ".targets[" + std::to_string(k) + "]"));
                if (slice.targets.size() != slice.layers.size())
                    bad(path + ".targets", "must have the same length as layers");
                for (int l : slice.targets)
                    if (l < 0) bad(path + ".targets", "target indices must be >= 0");
            } else {
                slice.targets = slice.layers;
            }
            recipe.slices.push_back(std::move(slice));
        }
    }

    if (root["aux"]) {
        const YAML::Node& aux = root["aux"];
        expect_map(aux, "aux");
        reject_unknown_keys(aux, {"embed_tokens", "norm", "lm_head"}, "aux");
        for (const auto& kv : aux) {
            const std::string key = kv.first.as<std::string>();
            recipe.aux[key] = scalar(kv.second, "aux." + key);
        }
    }

    if (root["config_from"]) recipe.config_from = scalar(root["config_from"], "config_from");
    if (recipe.config_from.empty()) bad("config_from", "must be a path or 'latest'");

    return recipe;
}

MergeRecipe read_recipe_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return parse_recipe(std::string(bytes.begin(), bytes.end()));
}

std::string recipe_to_yaml(const MergeRecipe& recipe) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "merge_method" << YAML::Value << "passthrough";
    if (!recipe.base_checkpoint.empty())
        out << YAML::Key << "base_checkpoint" << YAML::Value << recipe.base_checkpoint;
    out << YAML::Key << "num_ranks" << YAML::Value << recipe.num_ranks;
    if (!recipe.slices.empty()) {
        out << YAML::Key << "slices" << YAML::Value << YAML::BeginSeq;
        for (const auto& slice : recipe.slices) {
            out << YAML::BeginMap;
            out << YAML::Key << "source" << YAML::Value << slice.source;
            out << YAML::Key << "layers" << YAML::Value << YAML::Flow << slice.layers;
            if (slice.targets != slice.layers)
                out << YAML::Key << "targets" << YAML::Value << YAML::Flow << slice.targets;
            out << YAML::EndMap;
        }
        out << YAML::EndSeq;
    }
    if (!recipe.aux.empty()) {
        out << YAML::Key << "aux" << YAML::Value << YAML::BeginMap;
        for (const char* key : {"embed_tokens", "norm", "lm_head"}) {
            auto it = recipe.aux.find(key);
            if (it != recipe.aux.end()) out << YAML::Key << key << YAML::Value << it->second;
        }
        out << YAML::EndMap;
    }
    out << YAML::Key << "config_from" << YAML::Value << recipe.config_from;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

} // namespace tailor
