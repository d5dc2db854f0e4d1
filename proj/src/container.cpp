// SPDX-License-Identifier: Apache-2.0
//
// The container assumes a little-endian host, like every other consumer of
// the safetensors layout in this codebase's toolchain.
#include "tailor/container.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "tailor/errors.hpp"

namespace tailor {

using nlohmann::json;

std::size_t dtype_size(Dtype d) {
    return d == Dtype::BF16 ? 2 : 4;
}

const char* dtype_name(Dtype d) {
    return d == Dtype::BF16 ? "BF16" : "F32";
}

Dtype parse_dtype(const std::string& name) {
    if (name == "BF16") return Dtype::BF16;
    if (name == "F32") return Dtype::F32;
    fail(ErrorKind::CorruptContainer, "unsupported dtype '" + name + "'");
}

std::int64_t TensorEntry::element_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

const TensorEntry& TensorContainer::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
        fail(ErrorKind::CorruptContainer, "tensor '" + name + "' not present in container");
    return it->second;
}

void TensorContainer::add(std::string name, Dtype dtype, std::vector<std::int64_t> shape,
                          std::vector<std::uint8_t> bytes) {
    TensorEntry entry{dtype, std::move(shape), std::move(bytes)};
    if (entry.bytes.size() != static_cast<std::size_t>(entry.element_count()) * dtype_size(dtype))
        fail(ErrorKind::Geometry, "tensor '" + name + "' byte length does not match its shape");
    if (!tensors.emplace(std::move(name), std::move(entry)).second)
        fail(ErrorKind::Geometry, "duplicate tensor name in container");
}

std::int64_t TensorContainer::payload_bytes() const {
    std::int64_t n = 0;
    for (const auto& [name, entry] : tensors) n += static_cast<std::int64_t>(entry.bytes.size());
    return n;
}

namespace {

json build_header(const TensorContainer& c) {
    json header = json::object();
    if (!c.metadata.empty()) {
        json meta = json::object();
        for (const auto& [k, v] : c.metadata) meta[k] = v;
        header["__metadata__"] = std::move(meta);
    }
    std::int64_t offset = 0;
    for (const auto& [name, entry] : c.tensors) {
        const auto end = offset + static_cast<std::int64_t>(entry.bytes.size());
        header[name] = {{"dtype", dtype_name(entry.dtype)},
                        {"shape", entry.shape},
                        {"data_offsets", {offset, end}}};
        offset = end;
    }
    return header;
}

} // namespace

std::int64_t TensorContainer::serialized_bytes() const {
    std::string header = build_header(*this).dump();
    std::size_t padded = header.size();
    while ((8 + padded) % 8 != 0) ++padded;
    return static_cast<std::int64_t>(8 + padded) + payload_bytes();
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
    std::string header = build_header(*this).dump();
    while ((8 + header.size()) % 8 != 0) header.push_back(' ');

    std::vector<std::uint8_t> out;
    out.reserve(8 + header.size() + static_cast<std::size_t>(payload_bytes()));
    const std::uint64_t header_len = header.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((header_len >> (8 * i)) & 0xFF));
    out.insert(out.end(), header.begin(), header.end());
    for (const auto& [name, entry] : tensors) out.insert(out.end(), entry.bytes.begin(), entry.bytes.end());
    return out;
}

TensorContainer TensorContainer::deserialize(const std::vector<std::uint8_t>& data,
                                             const std::string& origin) {
    auto corrupt = [&](const std::string& what) {
        fail(ErrorKind::CorruptContainer, origin + ": " + what);
    };

    if (data.size() < 8) corrupt("shorter than the 8-byte header length");
    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i) header_len |= static_cast<std::uint64_t>(data[static_cast<std::size_t>(i)]) << (8 * i);
    if (header_len > data.size() - 8) corrupt("header length exceeds file size");

    json header;
    try {
        header = json::parse(data.begin() + 8, data.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        corrupt(std::string("header is not valid JSON (") + e.what() + ")");
    }
    if (!header.is_object()) corrupt("header is not a JSON object");

    const std::size_t payload_start = 8 + static_cast<std::size_t>(header_len);
    const std::int64_t payload_size = static_cast<std::int64_t>(data.size() - payload_start);

    TensorContainer c;
    // Ranges must be ascending in lexicographic name order and tile the
    // payload exactly; json object iteration is already name-sorted.
    std::int64_t expected_offset = 0;
    for (const auto& [name, info] : header.items()) {
        if (name == "__metadata__") {
            if (!info.is_object()) corrupt("__metadata__ is not an object");
            for (const auto& [k, v] : info.items()) {
                if (!v.is_string()) corrupt("__metadata__ values must be strings");
                c.metadata[k] = v.get<std::string>();
            }
            continue;
        }
        if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
            !info.contains("data_offsets"))
            corrupt("tensor '" + name + "' entry is malformed");

        TensorEntry entry;
        entry.dtype = parse_dtype(info["dtype"].get<std::string>());
        entry.shape = info["shape"].get<std::vector<std::int64_t>>();
        const auto offsets = info["data_offsets"].get<std::vector<std::int64_t>>();
        if (offsets.size() != 2 || offsets[0] > offsets[1]) corrupt("tensor '" + name + "' has invalid offsets");
        if (offsets[0] != expected_offset)
            corrupt("tensor '" + name + "' does not start where the previous range ended");
        if (offsets[1] > payload_size) corrupt("tensor '" + name + "' extends past the payload");
        const auto length = static_cast<std::size_t>(offsets[1] - offsets[0]);
        if (length != static_cast<std::size_t>(entry.element_count()) * dtype_size(entry.dtype))
            corrupt("tensor '" + name + "' byte range does not match its shape");
        entry.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(payload_start + static_cast<std::size_t>(offsets[0])),
                           data.begin() + static_cast<std::ptrdiff_t>(payload_start + static_cast<std::size_t>(offsets[1])));
        expected_offset = offsets[1];
        c.tensors.emplace(name, std::move(entry));
    }
    if (expected_offset != payload_size) corrupt("payload size does not match the declared ranges");
    return c;
}

std::int64_t container_size_for(
    const std::map<std::string, std::pair<Dtype, std::vector<std::int64_t>>>& decls,
    const std::map<std::string, std::string>& metadata) {
    json header = json::object();
    if (!metadata.empty()) {
        json meta = json::object();
        for (const auto& [k, v] : metadata) meta[k] = v;
        header["__metadata__"] = std::move(meta);
    }
    std::int64_t offset = 0;
    for (const auto& [name, decl] : decls) {
        std::int64_t elements = 1;
        for (auto d : decl.second) elements *= d;
        const auto end = offset + elements * static_cast<std::int64_t>(dtype_size(decl.first));
        header[name] = {{"dtype", dtype_name(decl.first)},
                        {"shape", decl.second},
                        {"data_offsets", {offset, end}}};
        offset = end;
    }
    std::size_t padded = header.dump().size();
    while ((8 + padded) % 8 != 0) ++padded;
    return static_cast<std::int64_t>(8 + padded) + offset;
}

void write_container(const std::filesystem::path& path, const TensorContainer& container) {
    write_file_bytes(path, container.serialize());
}

TensorContainer read_container(const std::filesystem::path& path) {
    return TensorContainer::deserialize(read_file_bytes(path), path.string());
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingArtifact, "cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::Storage, "read failed for '" + path.string() + "'");
    return data;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Storage, "cannot create '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) fail(ErrorKind::Storage, "write failed for '" + path.string() + "'");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Storage, "cannot create '" + path.string() + "'");
    out << text;
    out.flush();
    if (!out) fail(ErrorKind::Storage, "write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> floats_to_bytes(const std::vector<float>& values) {
    std::vector<std::uint8_t> bytes(values.size() * sizeof(float));
    std::memcpy(bytes.data(), values.data(), bytes.size());
    return bytes;
}

std::vector<float> bytes_to_floats(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % sizeof(float) != 0)
        fail(ErrorKind::CorruptContainer, "byte length is not a multiple of 4");
    std::vector<float> values(bytes.size() / sizeof(float));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

} // namespace tailor
