#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "triggerlab/image.hpp"
#include "triggerlab/rng.hpp"

namespace triggerlab {

// Per-pixel blend weights in [0,1], shared across channels. Box-sized when
// held by a Trigger, image-sized when describing a whole poisoned image.
struct AlphaMask {
    int height = 0;
    int width = 0;
    std::vector<double> weights;

    static AlphaMask ones(int height, int width) {
        AlphaMask m;
        m.height = height;
        m.width = width;
        m.weights.assign(static_cast<std::size_t>(height) * width, 1.0);
        return m;
    }

    static AlphaMask of(int height, int width, std::vector<double> weights) {
        AlphaMask m;
        m.height = height;
        m.width = width;
        m.weights = std::move(weights);
        m.validate();
        return m;
    }

    double at(int y, int x) const { return weights[static_cast<std::size_t>(y) * width + x]; }
    double& at(int y, int x) { return weights[static_cast<std::size_t>(y) * width + x]; }

    void validate() const {
        if (height < 1 || width < 1 ||
            weights.size() != static_cast<std::size_t>(height) * width)
            throw std::invalid_argument("AlphaMask: bad dimensions");
        bool any_positive = false;
        for (double w : weights) {
            if (w < 0.0 || w > 1.0) throw std::invalid_argument("AlphaMask: weight outside [0,1]");
            if (w > 0.0) any_positive = true;
        }
        if (!any_positive) throw std::invalid_argument("AlphaMask: all weights are zero");
    }
};

struct CoveringBox {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
    bool operator==(const CoveringBox&) const = default;
};

/// Tightest axis-aligned box containing every nonzero weight of an
/// image-sized mask.
inline CoveringBox minimum_covering_box(const AlphaMask& mask) {
    int min_r = mask.height, max_r = -1, min_c = mask.width, max_c = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x) > 0.0) {
                min_r = std::min(min_r, y);
                max_r = std::max(max_r, y);
                min_c = std::min(min_c, x);
                max_c = std::max(max_c, x);
            }
    if (max_r < 0) throw std::invalid_argument("minimum_covering_box: mask has no nonzero weight");
    return CoveringBox{min_r, min_c, max_r - min_r + 1, max_c - min_c + 1};
}

// A trigger is its appearance (pattern + mask over the covering box) plus its
// location: the (row, col) of the bottom-right pixel of the covering box in
// the host image. Host dimensions are carried so placement is checkable.
struct Trigger {
    Image pattern;    // box-sized appearance
    AlphaMask mask;   // box-sized blend weights
    int row = 0;      // bottom-right corner, host coordinates
    int col = 0;
    int host_height = 0;
    int host_width = 0;

    int box_height() const { return pattern.height; }
    int box_width() const { return pattern.width; }
    int top() const { return row - pattern.height + 1; }
    int left() const { return col - pattern.width + 1; }

    void validate() const {
        if (pattern.height != mask.height || pattern.width != mask.width)
            throw std::invalid_argument("Trigger: pattern/mask shape mismatch");
        mask.validate();
        if (top() < 0 || left() < 0 || row >= host_height || col >= host_width)
            throw std::invalid_argument("Trigger: covering box does not fit the host image");
    }

    bool operator==(const Trigger& other) const {
        return pattern == other.pattern && mask.weights == other.mask.weights &&
               mask.height == other.mask.height && mask.width == other.mask.width &&
               row == other.row && col == other.col && host_height == other.host_height &&
               host_width == other.host_width;
    }
};

/// The 3x3 two-level square used throughout: 128 at the four corners and the
/// center, 0 elsewhere, opaque mask, placed at the bottom-right pixel of the
/// host image.
inline Trigger default_badnets_trigger(int channels, int host_height, int host_width) {
    if (host_height < 3 || host_width < 3)
        throw std::invalid_argument("default_badnets_trigger: host image must be at least 3x3");
    Trigger t;
    t.pattern = Image::zeros(channels, 3, 3);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
                t.pattern.at(c, y, x) = ((y + x) % 2 == 0) ? 128 : 0;
    t.mask = AlphaMask::ones(3, 3);
    t.row = host_height - 1;
    t.col = host_width - 1;
    t.host_height = host_height;
    t.host_width = host_width;
    return t;
}

/// Whole-image trigger with a uniform blend weight; the pattern is seeded
/// uniform noise. blend = 0.2 reproduces the usual blended-attack setting.
inline Trigger blended_trigger(int channels, int host_height, int host_width, double blend,
                               std::uint64_t pattern_seed) {
    if (blend <= 0.0 || blend > 1.0)
        throw std::invalid_argument("blended_trigger: blend must be in (0,1]");
    Trigger t;
    t.pattern = Image::zeros(channels, host_height, host_width);
    Rng rng(pattern_seed);
    for (std::uint8_t& p : t.pattern.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    t.mask = AlphaMask::ones(host_height, host_width);
    for (double& w : t.mask.weights) w = blend;
    t.row = host_height - 1;
    t.col = host_width - 1;
    t.host_height = host_height;
    t.host_width = host_width;
    return t;
}

/// Expands a trigger's box mask to an image-sized mask (zeros elsewhere).
inline AlphaMask expand_to_host(const Trigger& t) {
    AlphaMask full;
    full.height = t.host_height;
    full.width = t.host_width;
    full.weights.assign(static_cast<std::size_t>(t.host_height) * t.host_width, 0.0);
    for (int y = 0; y < t.box_height(); ++y)
        for (int x = 0; x < t.box_width(); ++x)
            full.at(t.top() + y, t.left() + x) = t.mask.at(y, x);
    return full;
}

/// x_poisoned = (1 - alpha) * x + alpha * pattern inside the covering box,
/// untouched outside it. Blending runs in double on linear intensities and
/// requantizes half-up.
inline Image generate_poisoned(const Image& x, const Trigger& trigger) {
    if (x.height != trigger.host_height || x.width != trigger.host_width)
        throw std::invalid_argument("generate_poisoned: image does not match trigger host shape");
    if (x.channels != trigger.pattern.channels)
        throw std::invalid_argument("generate_poisoned: channel count mismatch");
    if (trigger.top() < 0 || trigger.left() < 0 || trigger.row >= x.height ||
        trigger.col >= x.width)
        throw std::invalid_argument("generate_poisoned: covering box out of bounds");
    Image out = x;
    for (int y = 0; y < trigger.box_height(); ++y) {
        for (int xw = 0; xw < trigger.box_width(); ++xw) {
            const double a = trigger.mask.at(y, xw);
            if (a == 0.0) continue;
            for (int c = 0; c < x.channels; ++c) {
                const double blended = (1.0 - a) * x.at(c, trigger.top() + y, trigger.left() + xw) +
                                       a * trigger.pattern.at(c, y, xw);
                out.at(c, trigger.top() + y, trigger.left() + xw) = requantize(blended);
            }
        }
    }
    return out;
}

/// Moves the covering box; pattern and mask are untouched.
inline Trigger relocate_trigger(const Trigger& trigger, int row, int col) {
    Trigger moved = trigger;
    moved.row = row;
    moved.col = col;
    if (moved.top() < 0 || moved.left() < 0 || row >= moved.host_height ||
        col >= moved.host_width)
        throw std::invalid_argument("relocate_trigger: covering box does not fit at (" +
                                    std::to_string(row) + "," + std::to_string(col) + ")");
    return moved;
}

/// Rewrites every pattern byte equal to old_value; mask and location unchanged.
inline Trigger recolor_trigger(const Trigger& trigger, std::uint8_t old_value,
                               std::uint8_t new_value) {
    Trigger recolored = trigger;
    for (std::uint8_t& p : recolored.pattern.pixels)
        if (p == old_value) p = new_value;
    return recolored;
}

struct PoisonSpec {
    int target_label = 0;
    double poison_rate = 0.1;
    std::uint64_t seed = 0;

    void validate(int num_classes, std::size_t dataset_size) const {
        if (poison_rate <= 0.0 || poison_rate > 1.0)
            throw std::invalid_argument("PoisonSpec: poison_rate must be in (0,1]");
        if (target_label < 0 || target_label >= num_classes)
            throw std::invalid_argument("PoisonSpec: target_label out of range");
        if (static_cast<std::size_t>(poison_rate * static_cast<double>(dataset_size)) == 0)
            throw std::invalid_argument("PoisonSpec: poison_rate selects zero items");
    }
};

/// Splits the training set into a stamped, relabeled poisoned part and the
/// untouched benign remainder. floor(rate * n) items are chosen uniformly
/// without replacement by spec.seed; both parts preserve original item order.
inline std::pair<LabeledDataset, LabeledDataset> make_poisoned_dataset(const LabeledDataset& train,
                                                                       const Trigger& trigger,
                                                                       const PoisonSpec& spec) {
    train.validate();
    trigger.validate();
    spec.validate(train.num_classes, train.size());
    const std::size_t count =
        static_cast<std::size_t>(spec.poison_rate * static_cast<double>(train.size()));

    Rng rng(spec.seed);
    const std::vector<std::size_t> chosen = rng.sample_indices(train.size(), count);

    LabeledDataset poisoned, benign;
    poisoned.num_classes = benign.num_classes = train.num_classes;
    std::vector<char> is_poisoned(train.size(), 0);
    for (std::size_t idx : chosen) is_poisoned[idx] = 1;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (is_poisoned[i])
            poisoned.push_back(generate_poisoned(train.images[i], trigger), spec.target_label);
        else
            benign.push_back(train.images[i], train.labels[i]);
    }
    return {std::move(poisoned), std::move(benign)};
}

}  // namespace triggerlab
