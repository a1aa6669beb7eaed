#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "triggerlab/defense.hpp"
#include "triggerlab/image.hpp"
#include "triggerlab/net.hpp"
#include "triggerlab/pgm.hpp"
#include "triggerlab/rng.hpp"
#include "triggerlab/trigger.hpp"

namespace triggerlab {

// ASR by trigger location; cell (i, j) is the bottom-right location
// (row0 + i*stride, col0 + j*stride).
struct LocationGrid {
    int rows = 0;
    int cols = 0;
    int row0 = 0;
    int col0 = 0;
    int stride = 1;
    std::vector<double> asr;  // row-major, rows*cols entries

    double at(int i, int j) const { return asr[static_cast<std::size_t>(i) * cols + j]; }
};

struct AppearancePoint {
    int value = 0;
    double asr = 0.0;
};

struct ComparisonRow {
    std::string model_name;
    std::string defense_name;
    double clean_acc = 0.0;
    double asr = 0.0;
    std::size_t n_clean = 0;
    std::size_t n_attacked = 0;
};

struct EvalReport {
    double clean_accuracy = 0.0;
    double asr = 0.0;
    std::size_t n_clean = 0;
    std::size_t n_attacked = 0;
    std::optional<LocationGrid> location_grid;
    std::optional<std::vector<AppearancePoint>> appearance_curve;
    std::optional<std::vector<ComparisonRow>> comparison_rows;
};

/// Seeded, order-preserving subsample of at most n items.
inline LabeledDataset subsample_dataset(const LabeledDataset& data, std::size_t n,
                                        std::uint64_t seed) {
    data.validate();
    if (n >= data.size()) return data;
    Rng rng(seed);
    const std::vector<std::size_t> idx = rng.sample_indices(data.size(), n);
    LabeledDataset out;
    out.num_classes = data.num_classes;
    for (std::size_t i : idx) out.push_back(data.images[i], data.labels[i]);
    return out;
}

namespace detail {

inline int logits_argmax(const Workspace<float>& ws, int row) {
    const int K = ws.arch.num_classes;
    const float* p = ws.logits.data() + static_cast<std::size_t>(row) * K;
    int best = 0;
    for (int j = 1; j < K; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

// Runs defended predictions over a sequence of images in workspace-sized
// batches. Per-query transform parameters are drawn in item order, and each
// batch row is computed exactly as a standalone forward, so the predictions
// match per-item defended_predict calls bit for bit.
template <class GetImage, class OnPrediction>
void predict_defended(const Network<float>& model, const DefensePolicy& policy, std::size_t count,
                      Workspace<float>& ws, Rng& rng, GetImage&& get_image,
                      OnPrediction&& on_prediction) {
    std::size_t done = 0;
    while (done < count) {
        const int b = static_cast<int>(
            std::min<std::size_t>(ws.capacity, count - done));
        for (int k = 0; k < b; ++k) {
            const TransformParam param = defense_param(policy, rng);
            const Image& src = get_image(done + k);
            if (param.is_identity())
                ws.set_input(k, src);
            else
                ws.set_input(k, apply(param, src));
        }
        forward_batch(model, ws, b);
        for (int k = 0; k < b; ++k) on_prediction(done + k, logits_argmax(ws, k));
        done += b;
    }
}

}  // namespace detail

/// Fraction of test items whose defended prediction matches the true label.
inline double clean_accuracy(const Network<float>& model, const LabeledDataset& testset,
                             const DefensePolicy& policy, Workspace<float>* ws = nullptr) {
    testset.validate();
    policy.validate_for(testset.images[0].height, testset.images[0].width);
    std::optional<Workspace<float>> local;
    if (!ws) {
        local.emplace(model.arch, 64);
        ws = &*local;
    }
    Rng rng(policy.seed);
    std::size_t correct = 0;
    detail::predict_defended(
        model, policy, testset.size(), *ws, rng,
        [&](std::size_t i) -> const Image& { return testset.images[i]; },
        [&](std::size_t i, int label) { correct += label == testset.labels[i]; });
    return static_cast<double>(correct) / static_cast<double>(testset.size());
}

/// Stamps the trigger on every item whose true label differs from the target
/// and returns the fraction the defended model sends to the target label.
inline double attack_success_rate(const Network<float>& model, const LabeledDataset& testset,
                                  const Trigger& trigger, int target_label,
                                  const DefensePolicy& policy, Workspace<float>* ws = nullptr,
                                  std::size_t* n_attacked = nullptr) {
    testset.validate();
    trigger.validate();
    policy.validate_for(testset.images[0].height, testset.images[0].width);
    std::optional<Workspace<float>> local;
    if (!ws) {
        local.emplace(model.arch, 64);
        ws = &*local;
    }
    std::vector<std::size_t> eligible;
    eligible.reserve(testset.size());
    for (std::size_t i = 0; i < testset.size(); ++i)
        if (testset.labels[i] != target_label) eligible.push_back(i);
    if (eligible.empty())
        throw std::runtime_error("attack_success_rate: no test item has a label other than the target");

    Rng rng(policy.seed);
    std::size_t hits = 0;
    Image stamped;
    detail::predict_defended(
        model, policy, eligible.size(), *ws, rng,
        [&](std::size_t k) -> const Image& {
            stamped = generate_poisoned(testset.images[eligible[k]], trigger);
            return stamped;
        },
        [&](std::size_t, int label) { hits += label == target_label; });
    if (n_attacked) *n_attacked = eligible.size();
    return static_cast<double>(hits) / static_cast<double>(eligible.size());
}

struct SweepSettings {
    int stride = 1;
    std::size_t subsample = 1000;
    std::uint64_t subsample_seed = 0;
};

/// Undefended ASR for every valid bottom-right trigger location, on a fixed
/// seeded subsample.
inline LocationGrid sweep_location(const Network<float>& model, const LabeledDataset& testset,
                                   const Trigger& trigger, int target_label,
                                   const SweepSettings& settings = {}) {
    trigger.validate();
    if (settings.stride < 1) throw std::invalid_argument("sweep_location: stride must be >= 1");
    const LabeledDataset sample =
        subsample_dataset(testset, settings.subsample, settings.subsample_seed);
    Workspace<float> ws(model.arch, 64);
    LocationGrid grid;
    grid.stride = settings.stride;
    grid.row0 = trigger.box_height() - 1;
    grid.col0 = trigger.box_width() - 1;
    grid.rows = (trigger.host_height - trigger.box_height()) / settings.stride + 1;
    grid.cols = (trigger.host_width - trigger.box_width()) / settings.stride + 1;
    grid.asr.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (int i = 0; i < grid.rows; ++i) {
        for (int j = 0; j < grid.cols; ++j) {
            const Trigger moved = relocate_trigger(trigger, grid.row0 + i * settings.stride,
                                                   grid.col0 + j * settings.stride);
            grid.asr.push_back(
                attack_success_rate(model, sample, moved, target_label, DefensePolicy::none(), &ws));
        }
    }
    return grid;
}

inline std::vector<int> default_appearance_values() {
    std::vector<int> v;
    for (int x = 0; x <= 255; x += 8) v.push_back(x);
    return v;
}

/// Undefended ASR after recoloring the trigger's swept intensity (default 128)
/// to each candidate value, on the same fixed subsample as sweep_location.
inline std::vector<AppearancePoint> sweep_appearance(const Network<float>& model,
                                                     const LabeledDataset& testset,
                                                     const Trigger& trigger, int target_label,
                                                     const std::vector<int>& values,
                                                     const SweepSettings& settings = {},
                                                     std::uint8_t swept_value = 128) {
    trigger.validate();
    bool present = false;
    for (std::uint8_t p : trigger.pattern.pixels) present = present || p == swept_value;
    if (!present)
        throw std::invalid_argument("sweep_appearance: trigger pattern has no pixel at the swept value");
    const LabeledDataset sample =
        subsample_dataset(testset, settings.subsample, settings.subsample_seed);
    Workspace<float> ws(model.arch, 64);
    std::vector<AppearancePoint> curve;
    curve.reserve(values.size());
    for (int v : values) {
        if (v < 0 || v > 255) throw std::invalid_argument("sweep_appearance: value outside [0,255]");
        const Trigger recolored =
            recolor_trigger(trigger, swept_value, static_cast<std::uint8_t>(v));
        curve.push_back({v, attack_success_rate(model, sample, recolored, target_label,
                                                DefensePolicy::none(), &ws)});
    }
    return curve;
}

/// Cartesian product of models x defenses; row order follows input order.
inline std::vector<ComparisonRow> compare(
    const std::vector<std::pair<std::string, const Network<float>*>>& models,
    const std::vector<std::pair<std::string, DefensePolicy>>& defenses,
    const LabeledDataset& testset, const Trigger& trigger, int target_label) {
    std::vector<ComparisonRow> rows;
    rows.reserve(models.size() * defenses.size());
    for (const auto& [model_name, model] : models) {
        Workspace<float> ws(model->arch, 64);
        for (const auto& [defense_name, policy] : defenses) {
            ComparisonRow row;
            row.model_name = model_name;
            row.defense_name = defense_name;
            row.clean_acc = clean_accuracy(*model, testset, policy, &ws);
            row.asr = attack_success_rate(*model, testset, trigger, target_label, policy, &ws,
                                          &row.n_attacked);
            row.n_clean = testset.size();
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

namespace detail {

inline std::ofstream open_report(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open report for writing: " + path);
    out << std::fixed << std::setprecision(4);
    return out;
}

}  // namespace detail

inline void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows) {
    std::ofstream out = detail::open_report(path);
    out << "model,defense,clean_acc,asr,n_clean,n_attacked\n";
    for (const ComparisonRow& r : rows)
        out << r.model_name << "," << r.defense_name << "," << r.clean_acc << "," << r.asr << ","
            << r.n_clean << "," << r.n_attacked << "\n";
    if (!out) throw std::runtime_error("failed writing report: " + path);
}

inline void write_location_csv(const std::string& path, const LocationGrid& grid) {
    std::ofstream out = detail::open_report(path);
    out << "row,col,asr\n";
    for (int i = 0; i < grid.rows; ++i)
        for (int j = 0; j < grid.cols; ++j)
            out << grid.row0 + i * grid.stride << "," << grid.col0 + j * grid.stride << ","
                << grid.at(i, j) << "\n";
    if (!out) throw std::runtime_error("failed writing report: " + path);
}

inline void write_appearance_csv(const std::string& path,
                                 const std::vector<AppearancePoint>& curve) {
    std::ofstream out = detail::open_report(path);
    out << "value,asr\n";
    for (const AppearancePoint& p : curve) out << p.value << "," << p.asr << "\n";
    if (!out) throw std::runtime_error("failed writing report: " + path);
}

/// Heatmap with intensity round(255 * ASR) per cell.
inline void write_location_pgm(const std::string& path, const LocationGrid& grid) {
    std::vector<std::uint8_t> pixels;
    pixels.reserve(grid.asr.size());
    for (double v : grid.asr)
        pixels.push_back(static_cast<std::uint8_t>(std::lround(255.0 * v)));
    write_pgm(path, grid.rows, grid.cols, pixels);
}

}  // namespace triggerlab
