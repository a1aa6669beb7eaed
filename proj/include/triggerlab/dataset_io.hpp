#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "triggerlab/image.hpp"

namespace triggerlab {

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

inline std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void put_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads an MNIST-style IDX image/label file pair (big-endian headers).
/// Labels fix num_classes = 10.
inline LabeledDataset load_mnist(const std::string& images_path, const std::string& labels_path) {
    const std::vector<std::uint8_t> ibytes = detail::read_file(images_path);
    if (ibytes.size() < 16 || detail::be32(ibytes.data()) != kIdxImageMagic)
        throw std::runtime_error("not an IDX image file (bad magic): " + images_path);
    const std::uint32_t n = detail::be32(ibytes.data() + 4);
    const std::uint32_t rows = detail::be32(ibytes.data() + 8);
    const std::uint32_t cols = detail::be32(ibytes.data() + 12);
    if (n == 0 || rows == 0 || cols == 0)
        throw std::runtime_error("IDX image file with empty dimensions: " + images_path);
    const std::size_t expected = 16 + std::size_t(n) * rows * cols;
    if (ibytes.size() != expected)
        throw std::runtime_error("truncated or oversized IDX image file: " + images_path);

    const std::vector<std::uint8_t> lbytes = detail::read_file(labels_path);
    if (lbytes.size() < 8 || detail::be32(lbytes.data()) != kIdxLabelMagic)
        throw std::runtime_error("not an IDX label file (bad magic): " + labels_path);
    const std::uint32_t ln = detail::be32(lbytes.data() + 4);
    if (lbytes.size() != 8 + std::size_t(ln))
        throw std::runtime_error("truncated or oversized IDX label file: " + labels_path);
    if (ln != n)
        throw std::runtime_error("image/label count mismatch: " + images_path + " has " +
                                 std::to_string(n) + " items, " + labels_path + " has " +
                                 std::to_string(ln));

    LabeledDataset ds;
    ds.num_classes = 10;
    ds.images.reserve(n);
    ds.labels.reserve(n);
    const std::uint8_t* px = ibytes.data() + 16;
    for (std::uint32_t i = 0; i < n; ++i) {
        Image img = Image::zeros(1, static_cast<int>(rows), static_cast<int>(cols));
        std::copy(px, px + std::size_t(rows) * cols, img.pixels.begin());
        px += std::size_t(rows) * cols;
        const int label = lbytes[8 + i];
        if (label >= 10)
            throw std::runtime_error("label out of range in " + labels_path + " at item " +
                                     std::to_string(i));
        ds.push_back(std::move(img), label);
    }
    return ds;
}

/// Writes a dataset as an IDX image/label file pair. Single-channel only.
inline void save_mnist(const LabeledDataset& ds, const std::string& images_path,
                       const std::string& labels_path) {
    ds.validate();
    if (ds.images.front().channels != 1)
        throw std::invalid_argument("save_mnist: only single-channel datasets");
    std::ofstream iout(images_path, std::ios::binary);
    if (!iout) throw std::runtime_error("cannot write file: " + images_path);
    detail::put_be32(iout, kIdxImageMagic);
    detail::put_be32(iout, static_cast<std::uint32_t>(ds.size()));
    detail::put_be32(iout, static_cast<std::uint32_t>(ds.images.front().height));
    detail::put_be32(iout, static_cast<std::uint32_t>(ds.images.front().width));
    for (const Image& img : ds.images)
        iout.write(reinterpret_cast<const char*>(img.pixels.data()),
                   static_cast<std::streamsize>(img.pixels.size()));

    std::ofstream lout(labels_path, std::ios::binary);
    if (!lout) throw std::runtime_error("cannot write file: " + labels_path);
    detail::put_be32(lout, kIdxLabelMagic);
    detail::put_be32(lout, static_cast<std::uint32_t>(ds.size()));
    for (int label : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(label);
        lout.write(reinterpret_cast<const char*>(&b), 1);
    }
}

inline constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label + 3*32*32 pixels

/// Loads CIFAR-10 binary batches (3073-byte records, channel-major pixels).
inline LabeledDataset load_cifar10(const std::vector<std::string>& batch_paths) {
    if (batch_paths.empty()) throw std::invalid_argument("load_cifar10: no batch files given");
    LabeledDataset ds;
    ds.num_classes = 10;
    for (const std::string& path : batch_paths) {
        const std::vector<std::uint8_t> bytes = detail::read_file(path);
        if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0)
            throw std::runtime_error("file length is not a multiple of 3073: " + path);
        const std::size_t records = bytes.size() / kCifarRecordBytes;
        ds.images.reserve(ds.size() + records);
        ds.labels.reserve(ds.size() + records);
        for (std::size_t r = 0; r < records; ++r) {
            const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
            if (rec[0] >= 10)
                throw std::runtime_error("label out of range in " + path + " at record " +
                                         std::to_string(r));
            Image img = Image::zeros(3, 32, 32);
            std::copy(rec + 1, rec + kCifarRecordBytes, img.pixels.begin());
            ds.push_back(std::move(img), rec[0]);
        }
    }
    return ds;
}

}  // namespace triggerlab
