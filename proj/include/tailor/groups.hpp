// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tailor/model.hpp"

namespace tailor {

/// AdamW hyperparameters attached to one parameter group.
struct AdamHyperparams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    bool operator==(const AdamHyperparams&) const = default;
    void validate() const;
};

// AdamW conventions used when the caller does not override them.
inline constexpr double kDefaultLr = 1e-3;
inline constexpr double kDefaultWeightDecay = 0.01;

/// FP32 master weights plus Adam first/second moments for one flattened
/// parameter group. All three vectors always have identical length.
struct GroupState {
    std::vector<float> master;
    std::vector<float> exp_avg;
    std::vector<float> exp_avg_sq;
    AdamHyperparams hyper;

    std::int64_t length() const { return static_cast<std::int64_t>(master.size()); }
    static GroupState zeros(std::int64_t n, const AdamHyperparams& hyper);
    void validate() const;
};

/// One entry of the parameter-group table. `owner` is empty for the two
/// coarse groups that span every module of one decay class.
struct GroupInfo {
    int index = 0;
    std::optional<ModuleId> owner;
    DecayClass decay = DecayClass::Decay;
    std::int64_t element_count = 0;
};

enum class Grouping { Fine, Coarse };

/// Ordered table of optimizer parameter groups. The fine layout is
/// layer-aligned with a fixed canonical ordering:
///   group 0            final norm            (NoDecay)
///   groups 1..L        layer i no-decay segment at 1+i
///   group L+1          embed_tokens
///   group L+2          lm_head (untied models only)
///   remaining groups   layer i decay segment at L+3+i (L+2+i when tied)
/// The coarse layout is the conventional two-group split: group 0 holds all
/// no-decay tensors, group 1 all decay tensors, each concatenated in module
/// order.
struct GroupTable {
    Grouping grouping = Grouping::Fine;
    int num_layers = 0;
    bool weight_tied = false;
    std::vector<GroupInfo> groups;

    int group_count() const { return static_cast<int>(groups.size()); }
    std::int64_t total_elements() const;
};

GroupTable build_group_table(const ModelSpec& spec);
GroupTable build_coarse_table(const ModelSpec& spec);

/// Group indices owned by a module: two for a transformer layer
/// (no-decay, decay), one for an auxiliary module.
std::vector<int> group_indices_for(const GroupTable& table, const ModuleId& m);

/// One tensor's slice within a flattened group.
struct TensorSlice {
    TensorDecl decl;
    std::int64_t group_offset = 0; // position within the flattened group
    std::int64_t model_offset = 0; // position within the flattened full model
};

/// Tensor composition of one group, in flattening order. Works for both
/// fine and coarse tables.
std::vector<TensorSlice> group_tensor_slices(const ModelSpec& spec, const GroupTable& table,
                                             int group_index);

/// Full optimizer state, one GroupState per table entry (same order).
using OptimizerState = std::vector<GroupState>;

OptimizerState zero_state(const ModelSpec& spec, const GroupTable& table,
                          const AdamHyperparams& base);

/// Per-group hyperparams derived from a base: decay groups keep the base
/// weight_decay, no-decay groups get zero.
AdamHyperparams hyper_for_class(const AdamHyperparams& base, DecayClass decay);

/// Re-slice a 2-group coarse state into the fine layer-aligned layout.
/// Every fine slice is bitwise identical to the corresponding coarse
/// sub-range; hyperparams inherit weight_decay by decay class.
OptimizerState coarse_to_fine(const ModelSpec& spec, const OptimizerState& coarse,
                              const GroupTable& fine_table);

/// Inverse of coarse_to_fine (bitwise round trip).
OptimizerState fine_to_coarse(const ModelSpec& spec, const OptimizerState& fine,
                              const GroupTable& fine_table);

} // namespace tailor
