#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vidnn/model.hpp"

// Checkpoint container: magic, version, length-prefixed architecture
// descriptor, then every parameter tensor in descriptor order as raw
// little-endian float32. The round trip is bit-exact; any container
// violation is rejected before a model is constructed.

namespace vidnn {

inline constexpr char kCheckpointMagic[8] = {'V', 'I', 'D', 'N', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const unsigned char* data, std::size_t n) : data_(data), n_(n) {}

    void need(std::size_t k, const char* what) const {
        if (pos_ + k > n_)
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  std::string("checkpoint truncated while reading ") + what);
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::string bytes(std::size_t k, const char* what) {
        need(k, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), k);
        pos_ += k;
        return s;
    }

    void floats(float* dst, std::size_t count, const char* what) {
        need(count * 4, what);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b)
                v |= static_cast<std::uint32_t>(data_[pos_ + i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
            dst[i] = std::bit_cast<float>(v);
        }
        pos_ += count * 4;
    }

    std::size_t remaining() const { return n_ - pos_; }

private:
    const unsigned char* data_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_checkpoint(Model& model, const std::string& path) {
    std::string desc = model_descriptor(model);
    std::vector<Param> params = model.params();
    std::uint64_t total = 0;
    for (const Param& p : params) total += p.value->size();

    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u64(out, desc.size());
    out += desc;
    detail::put_u64(out, total);
    out.reserve(out.size() + total * 4);
    for (const Param& p : params)
        for (float v : *p.value) {
            const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
        }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint file for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw IoError("failed writing checkpoint: " + path);
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint file: " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (!f.good() && !f.eof()) throw IoError("failed reading checkpoint: " + path);

    detail::ByteReader r(reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
    const std::string magic = r.bytes(sizeof(kCheckpointMagic), "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw CheckpointError(CheckpointError::Kind::bad_magic, "not a checkpoint file: " + path);
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Kind::bad_version,
                              "unsupported checkpoint version " + std::to_string(version));

    const std::uint64_t desc_len = r.u64("descriptor length");
    const std::string desc = r.bytes(desc_len, "descriptor");
    const std::uint64_t declared = r.u64("parameter count");

    Model model;
    try {
        model = model_from_descriptor(desc);
    } catch (const StructureError& e) {
        throw CheckpointError(CheckpointError::Kind::bad_descriptor, std::string("bad descriptor: ") + e.what());
    }

    std::vector<Param> params = model.params();
    std::uint64_t derived = 0;
    for (const Param& p : params) derived += p.value->size();
    if (derived != declared)
        throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                              "checkpoint declares " + std::to_string(declared) + " parameters but the descriptor yields " +
                                  std::to_string(derived));

    for (Param& p : params) r.floats(p.value->data(), p.value->size(), p.name.c_str());
    if (r.remaining() != 0)
        throw CheckpointError(CheckpointError::Kind::trailing_bytes,
                              std::to_string(r.remaining()) + " unexpected trailing bytes in " + path);
    return model;
}

}  // namespace vidnn
