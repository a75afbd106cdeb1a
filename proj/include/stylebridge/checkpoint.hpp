// Copyright 2026 The stylebridge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Checkpoint container, format version 1. All integers little-endian.
//
//   offset  size  field
//   0       8     magic "STYLEBRG"
//   8       4     u32 format version (= 1)
//   12      8     u64 metadata byte length M
//   20      M     metadata, UTF-8 JSON (object keys sorted)
//   ...     4     u32 tensor count T
//   then T records:
//           4     u32 name length K
//           K     name bytes
//           1     u8 dtype (1 = float64)
//           1     u8 rank D
//           4*D   u32 dims
//           8     u64 payload byte length P (= 8 * product(dims))
//           P     row-major float64 payload
//   end-32  32    SHA-256 of every preceding byte
//
// The hex form of the trailing SHA-256 is the content digest used for
// lineage records.

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stylebridge/error.hpp"
#include "stylebridge/generator.hpp"
#include "stylebridge/tensor.hpp"

namespace stylebridge {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "STYLEBRG";
inline constexpr std::size_t kDigestBytes = 32;

using Bytes = std::vector<unsigned char>;

inline std::array<unsigned char, kDigestBytes> sha256(const unsigned char* data, std::size_t n) {
    std::array<unsigned char, kDigestBytes> out{};
    unsigned int len = 0;
    if (EVP_Digest(data, n, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != kDigestBytes)
        throw CheckpointError("sha256 failed");
    return out;
}

inline std::string to_hex(const unsigned char* p, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        s[2 * i] = digits[p[i] >> 4];
        s[2 * i + 1] = digits[p[i] & 15];
    }
    return s;
}

inline std::string sha256_hex(const Bytes& bytes) {
    const auto d = sha256(bytes.data(), bytes.size());
    return to_hex(d.data(), d.size());
}

/// Named tensors plus a JSON metadata block.
struct Container {
    json metadata = json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;
};

namespace detail {

template <typename T>
void put(Bytes& out, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

inline void put_bytes(Bytes& out, const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out.insert(out.end(), c, c + n);
}

class Reader {
public:
    Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

    template <typename T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }

    const unsigned char* take(std::size_t k) {
        if (k > n_ - pos_) throw CheckpointError("corrupt checkpoint: unexpected end of data");
        const unsigned char* r = p_ + pos_;
        pos_ += k;
        return r;
    }

    bool done() const { return pos_ == n_; }

private:
    const unsigned char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Serialized container without the digest trailer.
inline Bytes serialize_body(const Container& c) {
    Bytes out;
    detail::put_bytes(out, kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta = c.metadata.dump();
    detail::put<std::uint64_t>(out, meta.size());
    detail::put_bytes(out, meta.data(), meta.size());
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        detail::put_bytes(out, name.data(), name.size());
        detail::put<std::uint8_t>(out, 1);
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
        for (int d : t.shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        detail::put<std::uint64_t>(out, t.numel() * sizeof(double));
        detail::put_bytes(out, t.data(), t.numel() * sizeof(double));
    }
    return out;
}

inline Bytes serialize(const Container& c) {
    Bytes out = serialize_body(c);
    const auto d = sha256(out.data(), out.size());
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

inline Container deserialize(const Bytes& bytes) {
    const std::size_t header = kCheckpointMagic.size() + sizeof(std::uint32_t);
    if (bytes.size() < header || std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
        throw CheckpointError("corrupt checkpoint: bad magic or truncated header");
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + kCheckpointMagic.size(), sizeof(version));
    if (version != kCheckpointVersion)
        throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    if (bytes.size() < header + kDigestBytes) throw CheckpointError("corrupt checkpoint: truncated");
    const std::size_t body = bytes.size() - kDigestBytes;
    const auto expect = sha256(bytes.data(), body);
    if (std::memcmp(expect.data(), bytes.data() + body, kDigestBytes) != 0)
        throw DigestMismatch("checkpoint digest mismatch (truncated or modified file)");

    detail::Reader r(bytes.data() + header, body - header);
    Container c;
    const auto meta_len = r.get<std::uint64_t>();
    const auto* meta = r.take(meta_len);
    try {
        c.metadata = json::parse(meta, meta + meta_len);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint32_t>();
        const auto* name = r.take(name_len);
        if (r.get<std::uint8_t>() != 1) throw CheckpointError("corrupt checkpoint: unknown dtype");
        const auto rank = r.get<std::uint8_t>();
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.get<std::uint32_t>());
        const auto payload = r.get<std::uint64_t>();
        if (payload != shape_numel(shape) * sizeof(double)) throw CheckpointError("corrupt checkpoint: payload size");
        Tensor t(shape);
        std::memcpy(t.data(), r.take(payload), payload);
        c.tensors.emplace_back(std::string(reinterpret_cast<const char*>(name), name_len), std::move(t));
    }
    if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");
    return c;
}

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path.string());
}

/// Hex SHA-256 of a file's full contents (used to compare CLI artifacts).
inline std::string file_digest(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Generator models

inline Container to_container(const GeneratorModel& m) {
    Container c;
    const auto& md = m.metadata();
    c.metadata = json{{"kind", "generator"},
                      {"format_version", kCheckpointVersion},
                      {"arch", m.arch()},
                      {"domain", md.domain},
                      {"origin", md.origin},
                      {"parents", md.parents},
                      {"lineage", md.lineage},
                      {"recipe", md.recipe}};
    c.metadata["train_seed"] = md.train_seed ? json(*md.train_seed) : json(nullptr);
    for (const auto& [name, t] : m.params().entries()) c.tensors.emplace_back(name, t);
    return c;
}

inline GeneratorModel generator_from_container(Container c) {
    const json& j = c.metadata;
    if (j.value("kind", "") != "generator") throw CheckpointError("checkpoint does not hold a generator");
    try {
        GeneratorConfig arch = j.at("arch").get<GeneratorConfig>();
        ModelMetadata md;
        md.domain = j.at("domain").get<std::string>();
        md.origin = j.at("origin").get<std::string>();
        md.parents = j.at("parents").get<std::vector<std::string>>();
        md.lineage = j.at("lineage").get<std::vector<std::string>>();
        md.recipe = j.at("recipe");
        if (!j.at("train_seed").is_null()) md.train_seed = j.at("train_seed").get<std::uint64_t>();
        ParameterTable params;
        for (auto& [name, t] : c.tensors) params.add(name, std::move(t));
        return GeneratorModel::from_parts(std::move(arch), std::move(md), std::move(params));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt generator metadata: ") + e.what());
    } catch (const ArchitectureMismatch& e) {
        throw CheckpointError(std::string("checkpoint tensors do not match architecture: ") + e.what());
    }
}

/// Content digest of a model: SHA-256 of its serialized checkpoint body.
inline std::string model_digest(const GeneratorModel& m) { return sha256_hex(serialize_body(to_container(m))); }

/// Writes the checkpoint and returns its content digest.
inline std::string save_checkpoint(const GeneratorModel& m, const std::filesystem::path& path) {
    const Bytes body = serialize_body(to_container(m));
    const auto d = sha256(body.data(), body.size());
    Bytes out = body;
    out.insert(out.end(), d.begin(), d.end());
    write_file(path, out);
    return to_hex(d.data(), d.size());
}

inline GeneratorModel load_checkpoint(const std::filesystem::path& path) {
    return generator_from_container(deserialize(read_file(path)));
}

/// True when `child` declares `parent` (by digest) as a direct parent.
inline bool declares_parent(const GeneratorModel& child, const GeneratorModel& parent) {
    const std::string d = model_digest(parent);
    for (const auto& p : child.metadata().parents)
        if (p == d) return true;
    return false;
}

/// Digest of the root of a model's lineage (itself when it has none).
inline std::string lineage_root(const GeneratorModel& m) {
    return m.metadata().lineage.empty() ? model_digest(m) : m.metadata().lineage.front();
}

}  // namespace stylebridge
