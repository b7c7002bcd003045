#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lungpipe/core/error.hpp"
#include "lungpipe/core/tensor.hpp"
#include "lungpipe/nn/layers.hpp"

// Checkpoint container: magic, version, layer-spec table, then named tensors
// (parameters and batchnorm running statistics) as shape table + raw
// little-endian 32-bit floats. Loading a checkpoint into a model reproduces
// forward outputs bit-for-bit.

namespace lp::nn {

inline constexpr char kCheckpointMagic[8] = {'L', 'P', 'C', 'K', 'P', 'T', '\0', '\0'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
    uint64_t step = 0;
    uint64_t seed = 0;
    std::vector<LayerSpec> specs;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

namespace detail {

template <typename V>
void put(std::ostream& os, V v) {
    static_assert(std::is_trivially_copyable_v<V>);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);  // host is little-endian
}

template <typename V>
V take(std::istream& is, const std::string& path) {
    V v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw IoError("checkpoint truncated: " + path);
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string take_string(std::istream& is, const std::string& path) {
    const auto len = take<uint32_t>(is, path);
    if (len > (1u << 20)) throw IoError("checkpoint corrupt (string length): " + path);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw IoError("checkpoint truncated: " + path);
    return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointData& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put<uint32_t>(os, kCheckpointVersion);
    detail::put<uint64_t>(os, ck.step);
    detail::put<uint64_t>(os, ck.seed);
    detail::put<uint32_t>(os, static_cast<uint32_t>(ck.specs.size()));
    for (const auto& s : ck.specs) {
        detail::put_string(os, s.kind);
        detail::put<uint32_t>(os, static_cast<uint32_t>(s.hp.size()));
        for (int64_t h : s.hp) detail::put<int64_t>(os, h);
    }
    detail::put<uint32_t>(os, static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        detail::put_string(os, name);
        detail::put<uint32_t>(os, static_cast<uint32_t>(t.rank()));
        for (int64_t d : t.shape) detail::put<int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.size())));
    }
    if (!os) throw IoError("write failed: " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[sizeof kCheckpointMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw IoError("not a checkpoint (bad magic): " + path);
    const auto version = detail::take<uint32_t>(is, path);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    CheckpointData ck;
    ck.step = detail::take<uint64_t>(is, path);
    ck.seed = detail::take<uint64_t>(is, path);
    const auto nspecs = detail::take<uint32_t>(is, path);
    for (uint32_t i = 0; i < nspecs; ++i) {
        LayerSpec s;
        s.kind = detail::take_string(is, path);
        const auto nhp = detail::take<uint32_t>(is, path);
        for (uint32_t j = 0; j < nhp; ++j) s.hp.push_back(detail::take<int64_t>(is, path));
        ck.specs.push_back(std::move(s));
    }
    const auto ntensors = detail::take<uint32_t>(is, path);
    for (uint32_t i = 0; i < ntensors; ++i) {
        std::string name = detail::take_string(is, path);
        const auto rank = detail::take<uint32_t>(is, path);
        if (rank > 8) throw IoError("checkpoint corrupt (tensor rank): " + path);
        std::vector<int64_t> shape;
        for (uint32_t j = 0; j < rank; ++j) shape.push_back(detail::take<int64_t>(is, path));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.size())));
        if (!is) throw IoError("checkpoint truncated: " + path);
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

// Verifies a loaded spec table against the model's expectation; names the
// first layer that differs.
inline void require_specs_match(const std::vector<LayerSpec>& expected,
                                const std::vector<LayerSpec>& got, const std::string& path) {
    if (expected.size() != got.size())
        throw IoError("checkpoint layer count mismatch (" + std::to_string(got.size()) + " vs " +
                      std::to_string(expected.size()) + " expected): " + path);
    for (size_t i = 0; i < expected.size(); ++i) {
        if (!(expected[i] == got[i]))
            throw IoError("checkpoint layer " + std::to_string(i) + " (" + got[i].kind +
                          ") does not match model (" + expected[i].kind + "): " + path);
    }
}

// Copies a named tensor out of the checkpoint, insisting on the exact shape.
inline void restore_tensor(const CheckpointData& ck, const std::string& name, Tensor& dst,
                           const std::string& path) {
    const Tensor* src = ck.find(name);
    if (!src) throw IoError("checkpoint missing tensor " + name + ": " + path);
    if (!src->same_shape(dst))
        throw IoError("checkpoint tensor " + name + " has shape " + src->shape_str() +
                      ", model wants " + dst.shape_str() + ": " + path);
    dst = *src;
}

}  // namespace lp::nn
