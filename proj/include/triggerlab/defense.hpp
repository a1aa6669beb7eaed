#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "triggerlab/image.hpp"
#include "triggerlab/net.hpp"
#include "triggerlab/rng.hpp"
#include "triggerlab/transforms.hpp"

namespace triggerlab {

enum class DefenseKind { none, flip, shrinkpad, flip_then_shrinkpad };

enum class OffsetMode { random, center };

// Test-time preprocessing wrapped around prediction. In random mode pad
// offsets are drawn fresh per query from the caller's stream; center mode
// pins them to (ceil(k/2), ceil(k/2)) for exact reproducibility.
struct DefensePolicy {
    DefenseKind kind = DefenseKind::none;
    int shrink = 0;
    OffsetMode offset_mode = OffsetMode::random;
    std::uint64_t seed = 0;  // seeds the offset stream of dataset-level evaluations

    static DefensePolicy none() { return {}; }
    static DefensePolicy flip() { return {DefenseKind::flip, 0, OffsetMode::random, 0}; }
    static DefensePolicy shrinkpad(int k, OffsetMode mode = OffsetMode::random,
                                   std::uint64_t seed = 0) {
        return {DefenseKind::shrinkpad, k, mode, seed};
    }
    static DefensePolicy flip_then_shrinkpad(int k, OffsetMode mode = OffsetMode::random,
                                             std::uint64_t seed = 0) {
        return {DefenseKind::flip_then_shrinkpad, k, mode, seed};
    }

    bool uses_shrink() const {
        return kind == DefenseKind::shrinkpad || kind == DefenseKind::flip_then_shrinkpad;
    }

    void validate_for(int height, int width) const {
        if (uses_shrink()) {
            if (shrink < 1 || shrink >= std::min(height, width))
                throw std::invalid_argument("DefensePolicy: shrink size must be in [1, min(H, W))");
        } else if (shrink != 0) {
            throw std::invalid_argument("DefensePolicy: shrink size is only valid for shrinkpad kinds");
        }
    }
};

inline int argmax_lowest(const std::vector<float>& logits) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(logits.size()); ++j)
        if (logits[j] > logits[best]) best = j;
    return best;
}

/// One per-query transform parameter; random mode draws pad offsets (top,
/// then left) from the stream, center mode is draw-free.
inline TransformParam defense_param(const DefensePolicy& policy, Rng& rng) {
    TransformParam param;
    param.flip = policy.kind == DefenseKind::flip || policy.kind == DefenseKind::flip_then_shrinkpad;
    if (policy.uses_shrink()) {
        param.shrink_size = policy.shrink;
        if (policy.offset_mode == OffsetMode::center) {
            param.pad_top = param.pad_left = (policy.shrink + 1) / 2;
        } else {
            param.pad_top = static_cast<int>(rng.below(static_cast<std::uint64_t>(policy.shrink) + 1));
            param.pad_left = static_cast<int>(rng.below(static_cast<std::uint64_t>(policy.shrink) + 1));
        }
    }
    return param;
}

/// Transforms the query per the policy, then classifies the transformed
/// image. Neither the model nor the input is mutated. Ties break toward the
/// lowest class index.
inline std::pair<int, std::vector<float>> defended_predict(const Network<float>& model,
                                                           const DefensePolicy& policy,
                                                           const Image& x, Rng& rng,
                                                           Workspace<float>* ws = nullptr) {
    policy.validate_for(x.height, x.width);
    const TransformParam param = defense_param(policy, rng);
    std::vector<float> logits = param.is_identity() ? forward(model, x, ws)
                                                    : forward(model, apply(param, x), ws);
    return {argmax_lowest(logits), std::move(logits)};
}

inline std::string defense_kind_name(DefenseKind kind) {
    switch (kind) {
        case DefenseKind::none: return "none";
        case DefenseKind::flip: return "flip";
        case DefenseKind::shrinkpad: return "shrinkpad";
        case DefenseKind::flip_then_shrinkpad: return "flip_then_shrinkpad";
    }
    return "unknown";
}

}  // namespace triggerlab
