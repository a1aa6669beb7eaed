#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "triggerlab/defense.hpp"
#include "triggerlab/eval.hpp"
#include "triggerlab/net.hpp"
#include "triggerlab/rng.hpp"
#include "triggerlab/trigger.hpp"

namespace triggerlab {

struct DatasetConfig {
    std::string name;  // synthetic | mnist | cifar10
    std::string train_images, train_labels, test_images, test_labels;
    std::vector<std::string> train_batches, test_batches;
    std::size_t train_count = 20000;  // synthetic only
    std::size_t test_count = 4000;
};

struct TriggerConfig {
    bool use_default = true;
    int height = 0, width = 0;
    std::vector<int> pattern;   // row-major, shared across channels
    std::vector<double> mask;   // row-major
    int row = -1, col = -1;     // bottom-right location; -1 keeps the default
};

struct PoisonConfig {
    int target_label = 0;
    double rate = 0.1;
};

struct TrainSection {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int epochs = 10;
    int batch_size = 64;
    bool flip_augment = true;
    int shrink_augment = 4;
};

struct EnhanceSection {
    int max_shrink = 4;
    bool allow_flip = true;
};

struct DefenseEntry {
    std::string name;
    DefenseKind kind = DefenseKind::none;
    int shrink = 0;
    OffsetMode offset_mode = OffsetMode::random;
};

struct EvalSection {
    std::size_t subsample = 1000;
    int stride = 1;
    std::vector<int> values;  // appearance sweep; empty means 0,8,...,248
    int swept_value = 128;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    TriggerConfig trigger;
    PoisonConfig poison;
    TrainSection train;
    std::optional<EnhanceSection> enhancement;
    std::vector<DefenseEntry> defenses;
    EvalSection evaluation;
    std::string model_name = "model";
    std::string output_dir;
    std::uint64_t master_seed = 0;
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const std::string& where,
                                           const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw std::invalid_argument("config: missing field '" + where + key + "'");
    return j.at(key);
}

template <class T>
T get_field(const nlohmann::json& j, const std::string& where, const char* key) {
    try {
        return require_field(j, where, key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument("config: field '" + where + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& where, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return get_field<T>(j, where, key);
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using detail::get_field;
    using detail::get_or;
    using detail::require_field;
    ExperimentConfig cfg;

    const nlohmann::json& ds = require_field(j, "", "dataset");
    cfg.dataset.name = get_field<std::string>(ds, "dataset.", "name");
    if (cfg.dataset.name == "synthetic") {
        cfg.dataset.train_count = get_or<std::size_t>(ds, "dataset.", "train_count", 20000);
        cfg.dataset.test_count = get_or<std::size_t>(ds, "dataset.", "test_count", 4000);
        if (cfg.dataset.train_count < 1 || cfg.dataset.test_count < 1)
            throw std::invalid_argument("config: field 'dataset.train_count' must be >= 1");
    } else if (cfg.dataset.name == "mnist") {
        cfg.dataset.train_images = get_field<std::string>(ds, "dataset.", "train_images");
        cfg.dataset.train_labels = get_field<std::string>(ds, "dataset.", "train_labels");
        cfg.dataset.test_images = get_field<std::string>(ds, "dataset.", "test_images");
        cfg.dataset.test_labels = get_field<std::string>(ds, "dataset.", "test_labels");
    } else if (cfg.dataset.name == "cifar10") {
        cfg.dataset.train_batches = get_field<std::vector<std::string>>(ds, "dataset.", "train_batches");
        cfg.dataset.test_batches = get_field<std::vector<std::string>>(ds, "dataset.", "test_batches");
        if (cfg.dataset.train_batches.empty() || cfg.dataset.test_batches.empty())
            throw std::invalid_argument("config: field 'dataset.train_batches' must be non-empty");
    } else {
        throw std::invalid_argument("config: field 'dataset.name' must be synthetic, mnist, or cifar10");
    }

    if (j.contains("trigger")) {
        const nlohmann::json& tr = j.at("trigger");
        if (tr.is_string()) {
            if (tr.get<std::string>() != "default_badnets")
                throw std::invalid_argument("config: field 'trigger' names an unknown trigger");
        } else {
            if (tr.contains("pattern")) {
                cfg.trigger.use_default = false;
                cfg.trigger.height = get_field<int>(tr, "trigger.", "height");
                cfg.trigger.width = get_field<int>(tr, "trigger.", "width");
                cfg.trigger.pattern = get_field<std::vector<int>>(tr, "trigger.", "pattern");
                cfg.trigger.mask = get_field<std::vector<double>>(tr, "trigger.", "mask");
                const std::size_t cells =
                    static_cast<std::size_t>(cfg.trigger.height) * cfg.trigger.width;
                if (cfg.trigger.height < 1 || cfg.trigger.width < 1 ||
                    cfg.trigger.pattern.size() != cells || cfg.trigger.mask.size() != cells)
                    throw std::invalid_argument(
                        "config: field 'trigger.pattern' does not match trigger.height x trigger.width");
                for (int v : cfg.trigger.pattern)
                    if (v < 0 || v > 255)
                        throw std::invalid_argument("config: field 'trigger.pattern' has values outside [0,255]");
            } else if (get_or<std::string>(tr, "trigger.", "base", "default_badnets") !=
                       "default_badnets") {
                throw std::invalid_argument("config: field 'trigger.base' names an unknown trigger");
            }
            if (tr.contains("location")) {
                const nlohmann::json& loc = tr.at("location");
                cfg.trigger.row = get_field<int>(loc, "trigger.location.", "row");
                cfg.trigger.col = get_field<int>(loc, "trigger.location.", "col");
            }
        }
    }

    const nlohmann::json& po = require_field(j, "", "poison");
    cfg.poison.target_label = get_field<int>(po, "poison.", "target_label");
    cfg.poison.rate = get_field<double>(po, "poison.", "rate");
    if (cfg.poison.rate <= 0.0 || cfg.poison.rate > 1.0)
        throw std::invalid_argument("config: field 'poison.rate' must be in (0,1]");
    if (cfg.poison.target_label < 0)
        throw std::invalid_argument("config: field 'poison.target_label' must be >= 0");

    if (j.contains("train")) {
        const nlohmann::json& tr = j.at("train");
        cfg.train.learning_rate = get_or<double>(tr, "train.", "learning_rate", 0.01);
        cfg.train.momentum = get_or<double>(tr, "train.", "momentum", 0.9);
        cfg.train.epochs = get_or<int>(tr, "train.", "epochs", 10);
        cfg.train.batch_size = get_or<int>(tr, "train.", "batch_size", 64);
        cfg.train.flip_augment = get_or<bool>(tr, "train.", "flip_augment", true);
        cfg.train.shrink_augment = get_or<int>(tr, "train.", "shrink_augment", 4);
        if (cfg.train.learning_rate <= 0.0)
            throw std::invalid_argument("config: field 'train.learning_rate' must be > 0");
        if (cfg.train.momentum < 0.0 || cfg.train.momentum >= 1.0)
            throw std::invalid_argument("config: field 'train.momentum' must be in [0,1)");
        if (cfg.train.epochs < 1)
            throw std::invalid_argument("config: field 'train.epochs' must be >= 1");
        if (cfg.train.batch_size < 1)
            throw std::invalid_argument("config: field 'train.batch_size' must be >= 1");
        if (cfg.train.shrink_augment < 0)
            throw std::invalid_argument("config: field 'train.shrink_augment' must be >= 0");
    }

    if (j.contains("enhancement") && !j.at("enhancement").is_null()) {
        const nlohmann::json& en = j.at("enhancement");
        EnhanceSection e;
        e.max_shrink = get_or<int>(en, "enhancement.", "max_shrink", 4);
        e.allow_flip = get_or<bool>(en, "enhancement.", "allow_flip", true);
        if (e.max_shrink < 0)
            throw std::invalid_argument("config: field 'enhancement.max_shrink' must be >= 0");
        cfg.enhancement = e;
    }

    if (j.contains("defenses")) {
        const nlohmann::json& defs = j.at("defenses");
        if (!defs.is_array())
            throw std::invalid_argument("config: field 'defenses' must be an array");
        for (std::size_t i = 0; i < defs.size(); ++i) {
            const std::string where = "defenses[" + std::to_string(i) + "].";
            const nlohmann::json& d = defs.at(i);
            DefenseEntry entry;
            entry.name = get_field<std::string>(d, where, "name");
            const std::string kind = get_field<std::string>(d, where, "kind");
            if (kind == "none") entry.kind = DefenseKind::none;
            else if (kind == "flip") entry.kind = DefenseKind::flip;
            else if (kind == "shrinkpad") entry.kind = DefenseKind::shrinkpad;
            else if (kind == "flip_then_shrinkpad") entry.kind = DefenseKind::flip_then_shrinkpad;
            else throw std::invalid_argument("config: field '" + where + "kind' is not a defense kind");
            if (entry.kind == DefenseKind::shrinkpad || entry.kind == DefenseKind::flip_then_shrinkpad) {
                entry.shrink = get_field<int>(d, where, "k");
                if (entry.shrink < 1)
                    throw std::invalid_argument("config: field '" + where + "k' must be >= 1");
            }
            const std::string mode = get_or<std::string>(d, where, "offset_mode", "random");
            if (mode == "random") entry.offset_mode = OffsetMode::random;
            else if (mode == "center") entry.offset_mode = OffsetMode::center;
            else throw std::invalid_argument("config: field '" + where + "offset_mode' must be random or center");
            cfg.defenses.push_back(std::move(entry));
        }
    }
    if (cfg.defenses.empty()) cfg.defenses.push_back({"standard", DefenseKind::none, 0, OffsetMode::random});

    if (j.contains("evaluation")) {
        const nlohmann::json& ev = j.at("evaluation");
        cfg.evaluation.subsample = get_or<std::size_t>(ev, "evaluation.", "subsample", 1000);
        cfg.evaluation.stride = get_or<int>(ev, "evaluation.", "stride", 1);
        cfg.evaluation.values = get_or<std::vector<int>>(ev, "evaluation.", "values", {});
        cfg.evaluation.swept_value = get_or<int>(ev, "evaluation.", "swept_value", 128);
        if (cfg.evaluation.subsample < 1)
            throw std::invalid_argument("config: field 'evaluation.subsample' must be >= 1");
        if (cfg.evaluation.stride < 1)
            throw std::invalid_argument("config: field 'evaluation.stride' must be >= 1");
        for (int v : cfg.evaluation.values)
            if (v < 0 || v > 255)
                throw std::invalid_argument("config: field 'evaluation.values' has values outside [0,255]");
        if (cfg.evaluation.swept_value < 0 || cfg.evaluation.swept_value > 255)
            throw std::invalid_argument("config: field 'evaluation.swept_value' must be in [0,255]");
    }
    if (cfg.evaluation.values.empty()) cfg.evaluation.values = default_appearance_values();

    cfg.model_name = get_or<std::string>(j, "", "model_name", "model");
    cfg.output_dir = get_or<std::string>(j, "", "output_dir", "");
    cfg.master_seed = get_field<std::uint64_t>(j, "", "seed");
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

// Component seeds all derive from the master seed by name, so one integer
// pins the whole experiment.
inline std::uint64_t component_seed(const ExperimentConfig& cfg, std::string_view component) {
    return derive_seed(cfg.master_seed, component);
}

}  // namespace triggerlab
