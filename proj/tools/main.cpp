#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "triggerlab/experiment.hpp"

namespace fs = std::filesystem;
using namespace triggerlab;

namespace {

std::string resolve_out(const ExperimentConfig& cfg, const std::string& flag) {
    const std::string out = flag.empty() ? cfg.output_dir : flag;
    if (out.empty())
        throw std::invalid_argument("no output directory: pass --out or set output_dir in the config");
    fs::create_directories(out);
    return out;
}

void write_train_log(const std::string& path, const TrainLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open training log for writing: " + path);
    out << "epoch,mean_loss\n" << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < log.epoch_mean_loss.size(); ++i)
        out << i + 1 << "," << log.epoch_mean_loss[i] << "\n";
    if (!out) throw std::runtime_error("failed writing training log: " + path);
}

Network<float> load_matching_checkpoint(const ExperimentConfig& cfg, const std::string& path,
                                        const LabeledDataset& test) {
    Network<float> model = load_checkpoint(path);
    Architecture expected;
    expected.in_channels = test.images[0].channels;
    expected.in_height = test.images[0].height;
    expected.in_width = test.images[0].width;
    expected.num_classes = test.num_classes;
    (void)cfg;
    if (!(model.arch == expected))
        throw std::runtime_error("checkpoint architecture '" + model.arch.descriptor() +
                                 "' does not match the configured dataset ('" +
                                 expected.descriptor() + "')");
    return model;
}

int cmd_train(const std::string& config_path, const std::string& out_flag) {
    const ExperimentConfig cfg = load_config(config_path);
    const ExperimentData data = load_experiment_data(cfg);
    const TrainOutcome outcome = run_training(cfg, data);
    for (std::size_t i = 0; i < outcome.log.epoch_mean_loss.size(); ++i)
        std::cout << "epoch " << i + 1 << " mean_loss " << std::fixed << std::setprecision(6)
                  << outcome.log.epoch_mean_loss[i] << "\n";
    const std::string out = resolve_out(cfg, out_flag);
    save_checkpoint(outcome.model, out + "/model.ckpt");
    write_train_log(out + "/train_log.csv", outcome.log);
    std::cout << "checkpoint: " << out << "/model.ckpt\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& out_flag) {
    const ExperimentConfig cfg = load_config(config_path);
    const LabeledDataset test = load_test_data(cfg);
    const Network<float> model = load_matching_checkpoint(cfg, checkpoint_path, test);
    const std::vector<ComparisonRow> rows = run_comparison(cfg, test, model);
    const std::string out = resolve_out(cfg, out_flag);
    write_comparison_csv(out + "/comparison.csv", rows);
    for (const ComparisonRow& r : rows)
        std::cout << r.model_name << " / " << r.defense_name << ": clean_acc " << std::fixed
                  << std::setprecision(4) << r.clean_acc << ", asr " << r.asr << "\n";
    std::cout << "report: " << out << "/comparison.csv\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& checkpoint_path,
              const std::string& kind, const std::string& out_flag) {
    const ExperimentConfig cfg = load_config(config_path);
    const LabeledDataset test = load_test_data(cfg);
    const Network<float> model = load_matching_checkpoint(cfg, checkpoint_path, test);
    const std::string out = resolve_out(cfg, out_flag);
    if (kind == "location") {
        const LocationGrid grid = run_location_sweep(cfg, test, model);
        write_location_csv(out + "/location.csv", grid);
        write_location_pgm(out + "/location.pgm", grid);
        std::cout << "grid: " << grid.rows << "x" << grid.cols << ", reports: " << out
                  << "/location.{csv,pgm}\n";
    } else {
        const std::vector<AppearancePoint> curve = run_appearance_sweep(cfg, test, model);
        write_appearance_csv(out + "/appearance.csv", curve);
        std::cout << "points: " << curve.size() << ", report: " << out << "/appearance.csv\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"static-trigger backdoor attack, defense, and sweep toolkit"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_dir, kind;

    CLI::App* train_cmd = app.add_subcommand("train", "poison the training set and fit a model");
    train_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    train_cmd->add_option("--out", out_dir, "output directory");

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "clean accuracy and attack success rate per defense");
    eval_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    eval_cmd->add_option("--out", out_dir, "output directory");

    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "trigger location or appearance sensitivity sweep");
    sweep_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    sweep_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    sweep_cmd->add_option("--kind", kind, "location | appearance")
        ->required()
        ->check(CLI::IsMember({"location", "appearance"}));
    sweep_cmd->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(config_path, checkpoint_path, out_dir);
        return cmd_sweep(config_path, checkpoint_path, kind, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
