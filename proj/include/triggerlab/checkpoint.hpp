#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "triggerlab/net.hpp"

namespace triggerlab {

// Checkpoint layout, all integers little-endian:
//   8 bytes   magic "TRIGLAB1"
//   u32       architecture descriptor length
//   bytes     architecture descriptor (see Architecture::descriptor)
//   u64       parameter count
//   f32[n]    weights in storage order
inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'I', 'G', 'L', 'A', 'B', '1'};

namespace detail {

inline void put_le32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_le64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_le64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline void save_checkpoint(const Network<float>& net, const std::string& path) {
    const std::string desc = net.arch.descriptor();
    std::string blob;
    blob.reserve(24 + desc.size() + 4 * net.weights.size());
    blob.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_le32(blob, static_cast<std::uint32_t>(desc.size()));
    blob.append(desc);
    detail::put_le64(blob, net.weights.size());
    for (float w : net.weights) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(w);
        detail::put_le32(blob, bits);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

inline Network<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (blob.size() - pos < n) throw std::runtime_error("truncated checkpoint: " + path);
    };
    need(sizeof(kCheckpointMagic));
    if (std::memcmp(blob.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    pos += sizeof(kCheckpointMagic);

    need(4);
    const std::uint32_t desc_len = detail::get_le32(blob.data() + pos);
    pos += 4;
    need(desc_len);
    const std::string desc(reinterpret_cast<const char*>(blob.data() + pos), desc_len);
    pos += desc_len;

    Network<float> net;
    net.arch = parse_architecture(desc);

    need(8);
    const std::uint64_t count = detail::get_le64(blob.data() + pos);
    pos += 8;
    if (count != ParamLayout(net.arch).total)
        throw std::runtime_error("checkpoint parameter count does not match its architecture: " +
                                 path);
    need(4 * count);
    net.weights.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t bits = detail::get_le32(blob.data() + pos + 4 * i);
        net.weights[i] = std::bit_cast<float>(bits);
    }
    if (pos + 4 * count != blob.size())
        throw std::runtime_error("checkpoint has trailing bytes: " + path);
    return net;
}

}  // namespace triggerlab
