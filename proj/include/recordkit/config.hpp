#pragma once

#include <string>
#include <vector>

#include "recordkit/embed_attack.hpp"
#include "recordkit/erasure.hpp"
#include "recordkit/evaluation.hpp"
#include "recordkit/model.hpp"
#include "recordkit/record_attack.hpp"
#include "recordkit/train.hpp"

namespace recordkit {

// Whole-experiment configuration. Per-module seeds are never stored: every
// stochastic component derives its stream from the master seed plus a
// fixed component tag, so the pipeline fills them in at run time.
struct ExperimentConfig {
    uint64_t master_seed = 1;

    ModelDims model;

    struct ScheduleSection {
        size_t timesteps = 100;
        double beta_min = 1e-4;
        double beta_max = 0.1;
        bool operator==(const ScheduleSection&) const = default;
    } schedule;

    struct DatasetSection {
        double separation = 6.0;
        double sigma = 1.0;
        bool operator==(const DatasetSection&) const = default;
    } dataset;

    TrainConfig train;
    ErasureConfig erasure;

    struct AttackSection {
        std::string kind = "record";  // "record" or "embed"
        size_t seeds = 1;             // independent attack restarts
        size_t images_per_prompt = 10;
        AttackConfig record;
        EmbedAttackConfig embed;
        bool operator==(const AttackSection&) const = default;
    } attack;

    ClassifierConfig classifier;
    size_t eval_images = 100;  // no-attack baseline budget
    std::vector<size_t> sweep_lengths = {2, 4, 8};

    bool operator==(const ExperimentConfig&) const = default;
};

std::string serialize_config(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);
void validate_config(const ExperimentConfig& cfg);

// sha1 of the canonical serialization.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace recordkit
