#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace triggerlab {

/// Rounds half up and clamps to the 8-bit range.
inline std::uint8_t requantize(double v) {
    const double r = std::floor(v + 0.5);
    if (r <= 0.0) return 0;
    if (r >= 255.0) return 255;
    return static_cast<std::uint8_t>(r);
}

// 8-bit image, channel-major then row-major. Pixel arithmetic elsewhere in
// the library is done on linear intensities and requantized with round-half-up;
// the model consumes pixels as value/255.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    static Image zeros(int channels, int height, int width) {
        if (channels != 1 && channels != 3)
            throw std::invalid_argument("Image: channels must be 1 or 3");
        if (height < 1 || width < 1)
            throw std::invalid_argument("Image: height and width must be >= 1");
        Image img;
        img.channels = channels;
        img.height = height;
        img.width = width;
        img.pixels.assign(static_cast<std::size_t>(channels) * height * width, 0);
        return img;
    }

    static Image filled(int channels, int height, int width, std::uint8_t value) {
        Image img = zeros(channels, height, width);
        std::fill(img.pixels.begin(), img.pixels.end(), value);
        return img;
    }

    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height + y) * width + x;
    }
    std::uint8_t at(int c, int y, int x) const { return pixels[index(c, y, x)]; }
    std::uint8_t& at(int c, int y, int x) { return pixels[index(c, y, x)]; }

    std::size_t pixel_count() const { return pixels.size(); }
    bool same_shape(const Image& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }
    bool operator==(const Image& other) const = default;
};

struct LabeledDataset {
    std::vector<Image> images;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    void push_back(Image img, int label) {
        images.push_back(std::move(img));
        labels.push_back(label);
    }

    /// Loader-level invariants: non-empty, homogeneous shape, labels in range.
    void validate() const {
        if (images.size() != labels.size())
            throw std::runtime_error("LabeledDataset: image/label count mismatch");
        if (images.empty()) throw std::runtime_error("LabeledDataset: empty dataset");
        for (const Image& img : images)
            if (!img.same_shape(images.front()))
                throw std::runtime_error("LabeledDataset: inhomogeneous image shapes");
        for (int label : labels)
            if (label < 0 || label >= num_classes)
                throw std::runtime_error("LabeledDataset: label out of range");
    }
};

/// Concatenates two datasets sharing shape and class count. Either side may be
/// empty (e.g. the benign remainder of a fully poisoned split).
inline LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
    LabeledDataset out;
    out.num_classes = a.empty() ? b.num_classes : a.num_classes;
    if (!a.empty() && !b.empty()) {
        if (a.num_classes != b.num_classes)
            throw std::invalid_argument("concat: class count mismatch");
        if (!a.images.front().same_shape(b.images.front()))
            throw std::invalid_argument("concat: image shape mismatch");
    }
    out.images.reserve(a.size() + b.size());
    out.labels.reserve(a.size() + b.size());
    out.images.insert(out.images.end(), a.images.begin(), a.images.end());
    out.images.insert(out.images.end(), b.images.begin(), b.images.end());
    out.labels.insert(out.labels.end(), a.labels.begin(), a.labels.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

// Bilinear resize, align-corners-false: the source coordinate of output pixel
// d is (d + 0.5) * in/out - 0.5, clamped to the source extent. Interpolation
// runs in double on linear intensities (identical, up to exact scaling, to
// unit-interval arithmetic) and requantizes half-up. The factorization below
// is the reference evaluation order; tests freeze values computed with it.
inline Image bilinear_resize(const Image& img, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1)
        throw std::invalid_argument("bilinear_resize: target dimensions must be >= 1");
    if (out_height == img.height && out_width == img.width) {
        // exact sampling positions; avoid needless float round trips
        return img;
    }
    Image out = Image::zeros(img.channels, out_height, out_width);
    const double scale_y = static_cast<double>(img.height) / out_height;
    const double scale_x = static_cast<double>(img.width) / out_width;
    for (int y = 0; y < out_height; ++y) {
        double fy = (y + 0.5) * scale_y - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            double fx = (x + 0.5) * scale_x - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1.0 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
                const double bot = (1.0 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
                out.at(c, y, x) = requantize((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

}  // namespace triggerlab
