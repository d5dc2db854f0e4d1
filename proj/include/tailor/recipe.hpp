// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

namespace tailor {

/// One layer slice of a merge recipe: take `layers` from `source` and place
/// them at `targets` (defaults to the same indices). Layer indices are
/// 0-based; a {start, end} range is half-open.
struct RecipeSlice {
    std::string source;
    std::vector<int> layers;
    std::vector<int> targets;
};

/// Parsed YAML merge recipe. After resolution (explicit slices + aux + base
/// fallback) every module of the model maps to exactly one source.
struct MergeRecipe {
    std::string base_checkpoint; // optional fallback source ("" if absent)
    int num_ranks = 0;
    std::vector<RecipeSlice> slices;
    std::map<std::string, std::string> aux; // keys: embed_tokens, norm, lm_head
    std::string config_from = "latest";     // path or "latest"
};

/// Parse and schema-validate a recipe. Unknown keys, wrong types and
/// malformed ranges raise RecipeError naming the offending field.
MergeRecipe parse_recipe(const std::string& yaml_text);

MergeRecipe read_recipe_file(const std::string& path);

/// Canonical YAML form of a recipe (stable field order).
std::string recipe_to_yaml(const MergeRecipe& recipe);

} // namespace tailor
