#pragma once

#include <string>
#include <vector>

#include "recordkit/config.hpp"

namespace recordkit {

// Artifact layout inside the output directory.
struct PipelinePaths {
    std::string out;

    std::string baseline() const { return out + "/baseline.ckpt"; }
    std::string erased() const { return out + "/erased.ckpt"; }
    std::string attack_result(const std::string& kind, size_t index) const {
        return out + "/attack_" + kind + "_" + std::to_string(index) + ".json";
    }
    std::string embed_snapshots(size_t index) const {
        return out + "/embed_snapshots_" + std::to_string(index) + ".ckpt";
    }
    std::string evaluation_csv() const { return out + "/evaluation.csv"; }
    std::string eval_summary() const { return out + "/eval_summary.json"; }
    std::string similarity_hist() const { return out + "/similarity_hist.csv"; }
    std::string similarity_pairs() const { return out + "/similarity_pairs.csv"; }
    std::string trajectory_csv() const { return out + "/trajectory_distance.csv"; }
    std::string pca_csv() const { return out + "/pca_coords.csv"; }
    std::string analysis_summary() const { return out + "/analysis_summary.json"; }
    std::string sweep_csv() const { return out + "/sweep.csv"; }
    std::string sweep_json() const { return out + "/sweep.json"; }
    std::string manifest() const { return out + "/manifest.json"; }
};

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t instance = 0);

// Each command validates its config, reads required upstream artifacts,
// writes its outputs plus manifest entries, and returns the paths written.
std::vector<std::string> cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_erase(const ExperimentConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_attack(const ExperimentConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_evaluate(const ExperimentConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_analyze(const ExperimentConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                                   const std::vector<size_t>& lengths);

}  // namespace recordkit
