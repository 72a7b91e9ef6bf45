#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "infoneat/infoneat.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string dataset;
    std::string attack_dataset;
    std::string model;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "plain-text key=value configuration file");
    cmd->add_option("--out", flags.out_dir, "output directory (default: out)");
    cmd->add_option("--dataset", flags.dataset, "training trace-set path");
    cmd->add_option("--attack-dataset", flags.attack_dataset, "attack trace-set path");
    cmd->add_option("--model", flags.model, "stacked model path");
    cmd->add_option("--seed", flags.seed, "master seed; all randomness derives from it")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--workers", flags.workers, "sub-model training threads");
}

infoneat::RunConfig resolve(const CommonFlags& flags) {
    infoneat::RunConfig config;
    if (!flags.config_path.empty()) {
        config.apply(infoneat::KeyValueConfig::from_file(flags.config_path));
    }
    if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
    if (!flags.dataset.empty()) config.dataset_path = flags.dataset;
    if (!flags.attack_dataset.empty()) config.attack_dataset_path = flags.attack_dataset;
    if (!flags.model.empty()) config.model_path = flags.model;
    if (flags.seed_set) config.seed = flags.seed;
    if (flags.workers > 0) config.workers = flags.workers;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CMI-guided NEAT pipeline for profiled side-channel analysis"};
    app.require_subcommand(1);

    CommonFlags synth_flags, train_flags, attack_flags, report_flags;
    CLI::App* synth = app.add_subcommand("synth", "generate synthetic training and attack sets");
    add_common(synth, synth_flags);
    CLI::App* train = app.add_subcommand("train", "train the one-vs-all stacked model");
    add_common(train, train_flags);
    CLI::App* attack = app.add_subcommand("attack", "run the rank-curve attack for a trained model");
    add_common(attack, attack_flags);
    CLI::App* report = app.add_subcommand("report", "merge run artifacts into one report");
    add_common(report, report_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) infoneat::cmd_synth(resolve(synth_flags));
        if (train->parsed()) infoneat::cmd_train(resolve(train_flags));
        if (attack->parsed()) infoneat::cmd_attack(resolve(attack_flags));
        if (report->parsed()) infoneat::cmd_report(resolve(report_flags));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
