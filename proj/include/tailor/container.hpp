// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tailor {

enum class Dtype { BF16, F32 };

std::size_t dtype_size(Dtype d);
const char* dtype_name(Dtype d);
Dtype parse_dtype(const std::string& name);

/// One tensor held by a container: dtype, shape and raw little-endian bytes.
struct TensorEntry {
    Dtype dtype = Dtype::F32;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;

    std::int64_t element_count() const;
};

/// Binary tensor container, layout-compatible with the safetensors format:
/// an 8-byte little-endian header length, a UTF-8 JSON header mapping tensor
/// names to {dtype, shape, data_offsets} (space-padded so the payload starts
/// on an 8-byte boundary), then the raw payload. Tensors are packed in
/// lexicographic name order; byte ranges tile the payload exactly. Equal
/// logical content always serializes to equal bytes.
struct TensorContainer {
    std::map<std::string, TensorEntry> tensors;            // sorted by name
    std::map<std::string, std::string> metadata;           // "__metadata__", optional

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    const TensorEntry& at(const std::string& name) const;
    void add(std::string name, Dtype dtype, std::vector<std::int64_t> shape,
             std::vector<std::uint8_t> bytes);

    std::int64_t payload_bytes() const;

    /// Serialized size in bytes, without writing anything.
    std::int64_t serialized_bytes() const;

    std::vector<std::uint8_t> serialize() const;
    static TensorContainer deserialize(const std::vector<std::uint8_t>& data,
                                       const std::string& origin);
};

void write_container(const std::filesystem::path& path, const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path);

/// Serialized size of a container holding the declared tensors, computed
/// without materializing any payload. Used by the analytic size model.
std::int64_t container_size_for(
    const std::map<std::string, std::pair<Dtype, std::vector<std::int64_t>>>& decls,
    const std::map<std::string, std::string>& metadata);

// Raw file helpers shared across the store.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& data);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::vector<std::uint8_t> floats_to_bytes(const std::vector<float>& values);
std::vector<float> bytes_to_floats(const std::vector<std::uint8_t>& bytes);

} // namespace tailor
