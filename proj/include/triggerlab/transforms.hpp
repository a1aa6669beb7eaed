#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "triggerlab/image.hpp"
#include "triggerlab/rng.hpp"

namespace triggerlab {

// One sampled transformation configuration: optional left-right flip followed
// by ShrinkPad with the given shrink size and pad offsets.
struct TransformParam {
    bool flip = false;
    int shrink_size = 0;
    int pad_top = 0;
    int pad_left = 0;

    bool is_identity() const { return !flip && shrink_size == 0; }

    void validate() const {
        if (shrink_size < 0) throw std::invalid_argument("TransformParam: negative shrink_size");
        if (pad_top < 0 || pad_top > shrink_size || pad_left < 0 || pad_left > shrink_size)
            throw std::invalid_argument("TransformParam: pad offset outside [0, shrink_size]");
    }

    bool operator==(const TransformParam&) const = default;
};

// Bounded parameter domain: {identity, flip} when allow_flip, shrink sizes
// {0..max_shrink} with offsets {0..k} each. max_shrink = 0 and
// allow_flip = false make the domain the single identity parameter.
struct TransformDomain {
    int max_shrink = 0;
    bool allow_flip = false;

    bool identity_only() const { return max_shrink == 0 && !allow_flip; }

    void validate_for(int height, int width) const {
        if (max_shrink < 0) throw std::invalid_argument("TransformDomain: negative max_shrink");
        if (max_shrink >= std::min(height, width))
            throw std::invalid_argument("TransformDomain: max_shrink must be < min(H, W)");
    }
};

inline Image flip_lr(const Image& x) {
    Image out = x;
    for (int c = 0; c < x.channels; ++c)
        for (int y = 0; y < x.height; ++y)
            for (int col = 0; col < x.width; ++col)
                out.at(c, y, col) = x.at(c, y, x.width - 1 - col);
    return out;
}

/// Bilinear shrink to (H-k, W-k), then paste onto an all-zero H x W canvas
/// with the shrunk image's top-left corner at (pad_top, pad_left).
inline Image shrink_pad(const Image& x, int k, int pad_top, int pad_left) {
    if (k < 0 || k >= std::min(x.height, x.width))
        throw std::invalid_argument("shrink_pad: shrink size must be in [0, min(H, W))");
    if (pad_top < 0 || pad_top > k || pad_left < 0 || pad_left > k)
        throw std::invalid_argument("shrink_pad: pad offset outside [0, k]");
    if (k == 0) return x;
    const Image shrunk = bilinear_resize(x, x.height - k, x.width - k);
    Image out = Image::zeros(x.channels, x.height, x.width);
    for (int c = 0; c < x.channels; ++c)
        for (int y = 0; y < shrunk.height; ++y)
            for (int col = 0; col < shrunk.width; ++col)
                out.at(c, pad_top + y, pad_left + col) = shrunk.at(c, y, col);
    return out;
}

/// Draws theta from the domain: flip uniform over allowed values, shrink size
/// uniform over {0..max_shrink}, offsets uniform over {0..shrink_size} each.
/// Draw order is fixed (flip, shrink, top, left) for reproducibility.
inline TransformParam sample_param(const TransformDomain& domain, Rng& rng) {
    TransformParam p;
    p.flip = domain.allow_flip && rng.below(2) == 1;
    p.shrink_size = static_cast<int>(rng.below(static_cast<std::uint64_t>(domain.max_shrink) + 1));
    p.pad_top = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.shrink_size) + 1));
    p.pad_left = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.shrink_size) + 1));
    return p;
}

/// Flip first (if set), then ShrinkPad. The identity parameter returns the
/// input bit-exactly.
inline Image apply(const TransformParam& param, const Image& x) {
    param.validate();
    if (param.is_identity()) return x;
    if (param.flip && param.shrink_size == 0) return flip_lr(x);
    if (param.flip) return shrink_pad(flip_lr(x), param.shrink_size, param.pad_top, param.pad_left);
    return shrink_pad(x, param.shrink_size, param.pad_top, param.pad_left);
}

/// Mirrors each item left-right with probability 1/2 (seeded). Training-time
/// augmentation so flipped test inputs stay in-distribution.
inline LabeledDataset random_flip_dataset(const LabeledDataset& data, std::uint64_t seed) {
    LabeledDataset out = data;
    Rng rng(seed);
    for (Image& img : out.images)
        if (rng.below(2) == 1) img = flip_lr(img);
    return out;
}

/// One-shot augmentation: each item receives a single transform sampled from
/// the domain; labels are unchanged. The usual flip + pad/crop training
/// augmentation expressed in the same bounded family the defenses draw from.
inline LabeledDataset augment_dataset(const LabeledDataset& data, const TransformDomain& domain,
                                      std::uint64_t seed) {
    LabeledDataset out = data;
    if (out.empty() || domain.identity_only()) return out;
    domain.validate_for(out.images.front().height, out.images.front().width);
    Rng rng(seed);
    for (Image& img : out.images) img = apply(sample_param(domain, rng), img);
    return out;
}

}  // namespace triggerlab
