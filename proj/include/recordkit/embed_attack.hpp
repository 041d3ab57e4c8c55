#pragma once

#include <string>
#include <vector>

#include "recordkit/model.hpp"
#include "recordkit/sampleset.hpp"

namespace recordkit {

// kL1 matches the stored forward-process noise; kL2 matches the baseline
// model's prediction under the target conditioning.
enum class EmbedVariant { kL1, kL2 };

enum class EmbedInit { kRandomNormal, kNearTarget };

struct EmbedAttackConfig {
    EmbedVariant variant = EmbedVariant::kL2;
    size_t epochs = 50;
    double lr = 0.1;
    size_t batch = 16;
    size_t train_size = 100;  // latents generated by the baseline with the target prompt
    size_t eval_size = 64;    // fixed set behind the loss trace
    EmbedInit init = EmbedInit::kRandomNormal;
    size_t snapshot_interval = 10;  // 0 keeps only init and final
    uint64_t seed = 0;

    bool operator==(const EmbedAttackConfig&) const = default;
};

struct EmbedSnapshot {
    size_t epoch = 0;
    Tensor embed;  // [S, d_e]
};

struct EmbedAttackRun {
    Tensor initial;
    Tensor best;  // best-loss iterate, not the last one
    size_t best_epoch = 0;
    std::vector<double> loss_trace;  // entry e = eval loss after e epochs
    std::vector<EmbedSnapshot> snapshots;
    SampleSet eval_set;
    EmbedAttackConfig config;
    uint64_t seed = 0;
};

// Mean over the set of the variant's squared error. L1 requires stored
// noise in every item; L2 requires the baseline model and target prompt.
double embed_loss(const Tensor& embed, SampleSet& set, const Model& unlearned,
                  const Model* baseline, const TokenSequence* y_target, EmbedVariant variant);

EmbedAttackRun embed_attack(const Model& unlearned, const Model& baseline,
                            const TokenSequence& y_target, const EmbedAttackConfig& cfg);

const std::vector<EmbedSnapshot>& trajectory_log(const EmbedAttackRun& run);

std::string embed_run_to_json(const EmbedAttackRun& run, const std::string& snapshots_name);
// snapshots_name is the string recorded in the JSON (usually the file name
// relative to the result's directory); snapshots_path is where it is written.
void write_embed_run(const std::string& json_path, const std::string& snapshots_path,
                     const EmbedAttackRun& run, const std::string& snapshots_name = "");
std::vector<EmbedSnapshot> read_embed_snapshots(const std::string& snapshots_path);

}  // namespace recordkit
