#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdra/error.hpp"
#include "cli/config.hpp"
#include "cli/report.hpp"
#include "cli/stages.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string method;
    std::vector<double> etas;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "override the config seed");
    cmd->add_option("--out", f.out, "override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-domain cold-start recommendation with plug-in adapters"};
    app.require_subcommand(1);
    app.set_version_flag("--version", cdra::cli::version_string());
    Flags f;

    auto* synth = app.add_subcommand("synth", "generate synthetic domains with ground-truth latents");
    auto* prepare = app.add_subcommand("prepare", "filter, split and sample negatives");
    auto* pretrain = app.add_subcommand("pretrain", "train and freeze BPR backbones");
    auto* train = app.add_subcommand("train", "train the adapter or the mapping baseline");
    auto* evaluate = app.add_subcommand("evaluate", "leave-one-out cold-start evaluation");
    auto* sweep = app.add_subcommand("sweep", "retrain both methods over overlap proportions");
    auto* analyze = app.add_subcommand("analyze", "latent distance and disentanglement analysis");
    for (auto* cmd : {synth, prepare, pretrain, train, evaluate, sweep, analyze}) add_common(cmd, f);
    for (auto* cmd : {train, evaluate})
        cmd->add_option("--method", f.method, "adapter or emcdr")->required()->check(
            CLI::IsMember({"adapter", "emcdr"}));
    train->add_option("--eta", f.etas, "overlap proportion used for training")->expected(1);
    sweep->add_option("--eta", f.etas, "overlap proportions (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        auto cfg = cdra::cli::load_config(f.config);
        if (f.seed) cfg.seed = *f.seed;
        if (f.out) cfg.out = *f.out;
        if (sweep->parsed() && !f.etas.empty()) {
            for (double eta : f.etas)
                if (!(eta > 0.0 && eta <= 1.0)) throw cdra::cli::ConfigError({"--eta: values must lie in (0, 1]"});
            cfg.etas = f.etas;
        }

        using namespace cdra::cli;
        if (synth->parsed()) cmd_synth(cfg);
        else if (prepare->parsed()) cmd_prepare(cfg);
        else if (pretrain->parsed()) cmd_pretrain(cfg);
        else if (train->parsed())
            cmd_train(cfg, parse_method(f.method), f.etas.empty() ? std::nullopt : std::optional(f.etas.front()));
        else if (evaluate->parsed()) cmd_evaluate(cfg, parse_method(f.method));
        else if (sweep->parsed()) cmd_sweep(cfg);
        else if (analyze->parsed()) cmd_analyze(cfg);
    } catch (const cdra::cli::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const cdra::cli::PrerequisiteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return 0;
}
