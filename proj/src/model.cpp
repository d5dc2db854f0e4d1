// SPDX-License-Identifier: Apache-2.0
#include "tailor/model.hpp"

#include <charconv>

#include "tailor/errors.hpp"

namespace tailor {

void ModelSpec::validate() const {
    if (num_layers < 1) fail(ErrorKind::Geometry, "num_layers must be >= 1");
    if (hidden_dim < 1 || ffn_dim < 1 || vocab_size < 1)
        fail(ErrorKind::Geometry, "all model dimensions must be >= 1");
}

bool ModelSpec::same_geometry(const ModelSpec& other) const {
    return num_layers == other.num_layers && hidden_dim == other.hidden_dim &&
           ffn_dim == other.ffn_dim && vocab_size == other.vocab_size &&
           weight_tied == other.weight_tied;
}

std::string module_name(const ModuleId& m) {
    switch (m.kind) {
        case ModuleKind::EmbedTokens: return "embed_tokens";
        case ModuleKind::TransformerLayer: return "layers." + std::to_string(m.layer);
        case ModuleKind::Norm: return "norm";
        case ModuleKind::LmHead: return "lm_head";
    }
    fail(ErrorKind::InvalidModule, "unknown module kind");
}

ModuleId parse_module_name(const std::string& name) {
    if (name == "embed_tokens") return ModuleId::embed_tokens();
    if (name == "norm") return ModuleId::norm();
    if (name == "lm_head") return ModuleId::lm_head();
    constexpr std::string_view prefix = "layers.";
    if (name.starts_with(prefix)) {
        int layer = -1;
        const char* begin = name.data() + prefix.size();
        const char* end = name.data() + name.size();
        auto [ptr, ec] = std::from_chars(begin, end, layer);
        if (ec == std::errc() && ptr == end && layer >= 0)
            return ModuleId::transformer_layer(layer);
    }
    fail(ErrorKind::InvalidModule, "unrecognized module name '" + name + "'");
}

std::int64_t TensorDecl::element_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<ModuleId> enumerate_modules(const ModelSpec& spec) {
    spec.validate();
    std::vector<ModuleId> modules;
    modules.reserve(static_cast<std::size_t>(spec.module_count()));
    modules.push_back(ModuleId::embed_tokens());
    for (int i = 0; i < spec.num_layers; ++i) modules.push_back(ModuleId::transformer_layer(i));
    modules.push_back(ModuleId::norm());
    if (!spec.weight_tied) modules.push_back(ModuleId::lm_head());
    return modules;
}

bool module_valid(const ModelSpec& spec, const ModuleId& m) {
    switch (m.kind) {
        case ModuleKind::EmbedTokens:
        case ModuleKind::Norm: return true;
        case ModuleKind::LmHead: return !spec.weight_tied;
        case ModuleKind::TransformerLayer: return m.layer >= 0 && m.layer < spec.num_layers;
    }
    return false;
}

std::vector<TensorDecl> tensors_of(const ModelSpec& spec, const ModuleId& m) {
    spec.validate();
    if (!module_valid(spec, m))
        fail(ErrorKind::InvalidModule, "module '" + module_name(m) + "' is not part of this model");

    const auto h = static_cast<std::int64_t>(spec.hidden_dim);
    const auto f = static_cast<std::int64_t>(spec.ffn_dim);
    const auto v = static_cast<std::int64_t>(spec.vocab_size);

    switch (m.kind) {
        case ModuleKind::EmbedTokens:
            return {{"embed_tokens.weight", {v, h}, DecayClass::Decay}};
        case ModuleKind::Norm:
            return {{"norm.weight", {h}, DecayClass::NoDecay}};
        case ModuleKind::LmHead:
            return {{"lm_head.weight", {v, h}, DecayClass::Decay}};
        case ModuleKind::TransformerLayer: break;
    }

    // Declaration order below is the canonical flattening order.
    const std::string p = module_name(m) + ".";
    return {
        {p + "input_layernorm.weight", {h}, DecayClass::NoDecay},
        {p + "post_attention_layernorm.weight", {h}, DecayClass::NoDecay},
        {p + "attn.q_proj.weight", {h, h}, DecayClass::Decay},
        {p + "attn.k_proj.weight", {h, h}, DecayClass::Decay},
        {p + "attn.v_proj.weight", {h, h}, DecayClass::Decay},
        {p + "attn.o_proj.weight", {h, h}, DecayClass::Decay},
        {p + "mlp.gate_proj.weight", {f, h}, DecayClass::Decay},
        {p + "mlp.up_proj.weight", {f, h}, DecayClass::Decay},
        {p + "mlp.down_proj.weight", {h, f}, DecayClass::Decay},
    };
}

std::int64_t module_class_elements(const ModelSpec& spec, const ModuleId& m, DecayClass decay) {
    std::int64_t n = 0;
    for (const auto& t : tensors_of(spec, m))
        if (t.decay == decay) n += t.element_count();
    return n;
}

std::int64_t total_parameter_count(const ModelSpec& spec) {
    std::int64_t n = 0;
    for (const auto& m : enumerate_modules(spec))
        for (const auto& t : tensors_of(spec, m)) n += t.element_count();
    return n;
}

std::int64_t module_model_offset(const ModelSpec& spec, const ModuleId& m) {
    if (!module_valid(spec, m))
        fail(ErrorKind::InvalidModule, "module '" + module_name(m) + "' is not part of this model");
    std::int64_t offset = 0;
    for (const auto& cur : enumerate_modules(spec)) {
        if (cur == m) return offset;
        for (const auto& t : tensors_of(spec, cur)) offset += t.element_count();
    }
    fail(ErrorKind::InvalidModule, "module '" + module_name(m) + "' not found in enumeration");
}

} // namespace tailor
