// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tailor {

/// Layer-wise description of the toy model: L transformer layers plus the
/// auxiliary modules (token embedding, final norm, optional lm_head).
/// The model exists only as a named, shaped, decay-classified parameter set;
/// there is no forward computation.
struct ModelSpec {
    int num_layers = 0;     // L >= 1
    int hidden_dim = 0;
    int ffn_dim = 0;
    int vocab_size = 0;
    bool weight_tied = false;
    std::uint64_t seed = 0;

    bool operator==(const ModelSpec&) const = default;

    // L + 3 untied, L + 2 tied.
    int module_count() const { return num_layers + (weight_tied ? 2 : 3); }

    void validate() const;
    bool same_geometry(const ModelSpec& other) const;
};

enum class ModuleKind { EmbedTokens, TransformerLayer, Norm, LmHead };

/// Identifies one module of the model. Transformer layers carry a 0-based
/// index; the auxiliary kinds do not.
struct ModuleId {
    ModuleKind kind = ModuleKind::EmbedTokens;
    int layer = -1; // valid only for TransformerLayer

    static ModuleId embed_tokens() { return {ModuleKind::EmbedTokens, -1}; }
    static ModuleId transformer_layer(int i) { return {ModuleKind::TransformerLayer, i}; }
    static ModuleId norm() { return {ModuleKind::Norm, -1}; }
    static ModuleId lm_head() { return {ModuleKind::LmHead, -1}; }

    bool operator==(const ModuleId&) const = default;
    // Ordering is lexicographic on (kind, layer); used only for stable set
    // semantics in std::map/set keys, not for the canonical model order.
    auto operator<=>(const ModuleId&) const = default;
};

/// Canonical string form: "embed_tokens", "layers.<i>", "norm", "lm_head".
std::string module_name(const ModuleId& m);
ModuleId parse_module_name(const std::string& name);

enum class DecayClass { Decay, NoDecay };

/// One declared tensor: canonical name, shape, and weight-decay class.
struct TensorDecl {
    std::string name;
    std::vector<std::int64_t> shape;
    DecayClass decay = DecayClass::Decay;

    std::int64_t element_count() const;
};

/// Canonical module order: [embed_tokens, layers.0 .. layers.L-1, norm, lm_head?].
/// This is the single ordering used for flattening everywhere.
std::vector<ModuleId> enumerate_modules(const ModelSpec& spec);

/// True if m names a module of this spec (lm_head is invalid when tied).
bool module_valid(const ModelSpec& spec, const ModuleId& m);

/// Declared tensors of one module, in canonical declaration order.
/// Throws InvalidModule for lm_head on a tied spec or an out-of-range layer.
std::vector<TensorDecl> tensors_of(const ModelSpec& spec, const ModuleId& m);

/// Element count of all tensors of `m` belonging to `decay`.
std::int64_t module_class_elements(const ModelSpec& spec, const ModuleId& m, DecayClass decay);

/// Total trainable parameter count of the model.
std::int64_t total_parameter_count(const ModelSpec& spec);

/// Offset of a module's first element in the flattened full model
/// (canonical module order, declaration order within a module). These
/// offsets define the global element ids used by the gradient source.
std::int64_t module_model_offset(const ModelSpec& spec, const ModuleId& m);

} // namespace tailor
