#pragma once

#include <string>
#include <utility>
#include <vector>

#include "triggerlab/checkpoint.hpp"
#include "triggerlab/config.hpp"
#include "triggerlab/dataset_io.hpp"
#include "triggerlab/defense.hpp"
#include "triggerlab/eval.hpp"
#include "triggerlab/net.hpp"
#include "triggerlab/synthetic.hpp"
#include "triggerlab/transforms.hpp"
#include "triggerlab/trigger.hpp"

namespace triggerlab {

struct ExperimentData {
    LabeledDataset train;
    LabeledDataset test;
};

inline LabeledDataset load_test_data(const ExperimentConfig& cfg) {
    LabeledDataset test;
    if (cfg.dataset.name == "synthetic") {
        test = generate_synthetic_digits(cfg.dataset.test_count,
                                         component_seed(cfg, "synthetic-test"));
    } else if (cfg.dataset.name == "mnist") {
        test = load_mnist(cfg.dataset.test_images, cfg.dataset.test_labels);
    } else {
        test = load_cifar10(cfg.dataset.test_batches);
    }
    test.validate();
    return test;
}

inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData data;
    if (cfg.dataset.name == "synthetic") {
        data.train = generate_synthetic_digits(cfg.dataset.train_count,
                                               component_seed(cfg, "synthetic-train"));
    } else if (cfg.dataset.name == "mnist") {
        data.train = load_mnist(cfg.dataset.train_images, cfg.dataset.train_labels);
    } else {
        data.train = load_cifar10(cfg.dataset.train_batches);
    }
    data.train.validate();
    data.test = load_test_data(cfg);
    return data;
}

inline Architecture experiment_architecture(const ExperimentData& data) {
    Architecture arch;
    arch.in_channels = data.train.images[0].channels;
    arch.in_height = data.train.images[0].height;
    arch.in_width = data.train.images[0].width;
    arch.num_classes = data.train.num_classes;
    arch.validate();
    return arch;
}

inline Trigger experiment_trigger(const ExperimentConfig& cfg, int channels, int host_height,
                                  int host_width) {
    Trigger t;
    if (cfg.trigger.use_default) {
        t = default_badnets_trigger(channels, host_height, host_width);
    } else {
        t.pattern = Image::zeros(channels, cfg.trigger.height, cfg.trigger.width);
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < cfg.trigger.height; ++y)
                for (int x = 0; x < cfg.trigger.width; ++x)
                    t.pattern.at(c, y, x) = static_cast<std::uint8_t>(
                        cfg.trigger.pattern[static_cast<std::size_t>(y) * cfg.trigger.width + x]);
        t.mask = AlphaMask::of(cfg.trigger.height, cfg.trigger.width, cfg.trigger.mask);
        t.row = host_height - 1;
        t.col = host_width - 1;
        t.host_height = host_height;
        t.host_width = host_width;
    }
    if (cfg.trigger.row >= 0 || cfg.trigger.col >= 0) {
        t.row = cfg.trigger.row >= 0 ? cfg.trigger.row : t.row;
        t.col = cfg.trigger.col >= 0 ? cfg.trigger.col : t.col;
    }
    t.validate();
    return t;
}

inline std::vector<std::pair<std::string, DefensePolicy>> experiment_defenses(
    const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, DefensePolicy>> out;
    for (const DefenseEntry& entry : cfg.defenses) {
        DefensePolicy policy;
        policy.kind = entry.kind;
        policy.shrink = entry.shrink;
        policy.offset_mode = entry.offset_mode;
        policy.seed = derive_seed(cfg.master_seed, "defense:" + entry.name);
        out.emplace_back(entry.name, policy);
    }
    return out;
}

struct TrainOutcome {
    Network<float> model;
    TrainLog log;
    Trigger trigger;
};

/// The benign-side training augmentation: flip and pad/crop jitter expressed
/// in the bounded transform family. Poisoned items are never touched by it,
/// so the stamped trigger stays pristine.
inline TransformDomain experiment_augmentation(const ExperimentConfig& cfg) {
    return TransformDomain{cfg.train.shrink_augment, cfg.train.flip_augment};
}

/// Poison split, benign augmentation, then plain or enhanced training,
/// entirely derived from the config's master seed.
inline TrainOutcome run_training(const ExperimentConfig& cfg, const ExperimentData& data) {
    const Architecture arch = experiment_architecture(data);
    TrainOutcome out;
    out.trigger = experiment_trigger(cfg, arch.in_channels, arch.in_height, arch.in_width);

    PoisonSpec spec;
    spec.target_label = cfg.poison.target_label;
    spec.poison_rate = cfg.poison.rate;
    spec.seed = component_seed(cfg, "poison");
    auto [poisoned, benign] = make_poisoned_dataset(data.train, out.trigger, spec);
    benign = augment_dataset(benign, experiment_augmentation(cfg), component_seed(cfg, "augment"));

    const Network<float> fresh = new_model<float>(arch, component_seed(cfg, "init"));
    TrainConfig tc;
    tc.learning_rate = cfg.train.learning_rate;
    tc.momentum = cfg.train.momentum;
    tc.epochs = cfg.train.epochs;
    tc.batch_size = cfg.train.batch_size;
    tc.seed = component_seed(cfg, "train");

    if (cfg.enhancement) {
        TransformDomain domain{cfg.enhancement->max_shrink, cfg.enhancement->allow_flip};
        out.model = train_enhanced(fresh, poisoned, benign, domain, tc, &out.log);
    } else {
        out.model = train(fresh, concat(poisoned, benign), tc, &out.log);
    }
    return out;
}

inline std::vector<ComparisonRow> run_comparison(const ExperimentConfig& cfg,
                                                 const LabeledDataset& test,
                                                 const Network<float>& model) {
    const Trigger trigger =
        experiment_trigger(cfg, model.arch.in_channels, model.arch.in_height, model.arch.in_width);
    return compare({{cfg.model_name, &model}}, experiment_defenses(cfg), test, trigger,
                   cfg.poison.target_label);
}

inline SweepSettings experiment_sweep_settings(const ExperimentConfig& cfg) {
    SweepSettings s;
    s.stride = cfg.evaluation.stride;
    s.subsample = cfg.evaluation.subsample;
    s.subsample_seed = component_seed(cfg, "subsample");
    return s;
}

inline LocationGrid run_location_sweep(const ExperimentConfig& cfg, const LabeledDataset& test,
                                       const Network<float>& model) {
    const Trigger trigger =
        experiment_trigger(cfg, model.arch.in_channels, model.arch.in_height, model.arch.in_width);
    return sweep_location(model, test, trigger, cfg.poison.target_label,
                          experiment_sweep_settings(cfg));
}

inline std::vector<AppearancePoint> run_appearance_sweep(const ExperimentConfig& cfg,
                                                         const LabeledDataset& test,
                                                         const Network<float>& model) {
    const Trigger trigger =
        experiment_trigger(cfg, model.arch.in_channels, model.arch.in_height, model.arch.in_width);
    return sweep_appearance(model, test, trigger, cfg.poison.target_label,
                            cfg.evaluation.values, experiment_sweep_settings(cfg),
                            static_cast<std::uint8_t>(cfg.evaluation.swept_value));
}

}  // namespace triggerlab
