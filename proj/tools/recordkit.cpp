#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recordkit/errors.hpp"
#include "recordkit/pipeline.hpp"

using namespace recordkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitMissingArtifact = 2;
constexpr int kExitNumerical = 3;

int run_guarded(const std::function<std::vector<std::string>()>& fn) {
    try {
        std::vector<std::string> written = fn();
        for (const std::string& path : written) std::printf("wrote %s\n", path.c_str());
        return kExitOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return kExitMissingArtifact;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "failure: %s\n", e.what());
        return kExitNumerical;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"recordkit: train, erase, attack, evaluate and analyze a toy "
                 "conditional diffusion model"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    uint64_t seed_override = 0;
    std::vector<size_t> sweep_lengths;

    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (default: current directory)");
    auto* seed_opt = app.add_option("--seed", seed_override, "override the master seed");
    app.add_option("--lengths", sweep_lengths,
                   "prompt lengths for the sweep subcommand (default: config sweep_lengths)");

    auto* train = app.add_subcommand("train", "train the baseline model");
    auto* erase = app.add_subcommand("erase", "fine-tune the erased model from the baseline");
    auto* attack = app.add_subcommand("attack", "run the configured prompt or embedding attack");
    auto* evaluate = app.add_subcommand("evaluate", "generate and classify attack images");
    auto* analyze = app.add_subcommand("analyze", "embedding similarity, PCA and trajectories");
    auto* sweep = app.add_subcommand("sweep", "attack ASR as a function of prompt length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    ExperimentConfig cfg;
    try {
        cfg = load_config_file(config_path);
        if (seed_opt->count() > 0) cfg.master_seed = seed_override;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    }

    if (train->parsed()) return run_guarded([&] { return cmd_train(cfg, out_dir); });
    if (erase->parsed()) return run_guarded([&] { return cmd_erase(cfg, out_dir); });
    if (attack->parsed()) return run_guarded([&] { return cmd_attack(cfg, out_dir); });
    if (evaluate->parsed()) return run_guarded([&] { return cmd_evaluate(cfg, out_dir); });
    if (analyze->parsed()) return run_guarded([&] { return cmd_analyze(cfg, out_dir); });
    if (sweep->parsed()) {
        return run_guarded([&] {
            return cmd_sweep(cfg, out_dir,
                             sweep_lengths.empty() ? cfg.sweep_lengths : sweep_lengths);
        });
    }
    return kExitConfig;
}
