#pragma once

#include <string>
#include <vector>

#include "recordkit/model.hpp"
#include "recordkit/sampleset.hpp"

namespace recordkit {

struct AttackConfig {
    size_t passes = 20;         // N
    size_t grad_samples = 64;   // J
    size_t candidates = 64;     // K
    size_t length = 8;          // S
    size_t batch = 1;           // fresh samples per position visit
    size_t reference_size = 8;  // |R|
    // When set, every position visit evaluates candidates on the fixed
    // reference set itself instead of a fresh batch.
    bool use_reference_as_batch = false;
    uint64_t seed = 0;

    bool operator==(const AttackConfig&) const = default;
};

struct AttackUpdate {
    size_t pass = 0;
    size_t position = 0;
    int old_token = 0;
    int new_token = 0;
    double delta = 0.0;  // reference-loss change, always negative
};

struct AttackResult {
    TokenSequence initial;
    TokenSequence prompt;
    std::vector<double> loss_trace;  // reference loss after each position visit
    std::vector<AttackUpdate> updates;
    bool converged = false;  // final pass accepted no update
    uint64_t seed = 0;
    AttackConfig config;
};

// Sum over the set of ||eps_unlearned(z_t,t,T(y)) - eps_base(z_t,t,T(y_target))||^2.
// The baseline target term is cached in the set on first use.
double loss_hat(const TokenSequence& y, SampleSet& batch, const Model& unlearned,
                const Model& baseline, const TokenSequence& y_target);

// score_v = table row v . gbar, accumulated left to right.
std::vector<double> token_scores(const Tensor& table, const Tensor& gbar);
// K ids with the smallest score; ties break toward the smaller id.
std::vector<int> top_k_ids(const std::vector<double>& scores, size_t k);

// Average gradient of the sampled-batch loss with respect to the embedding
// substituted at `position`, over `grad_samples` distinct random tokens.
Tensor candidate_gradient(size_t position, const TokenSequence& y, SampleSet& batch,
                          size_t grad_samples, const Model& unlearned, const Model& baseline,
                          const TokenSequence& y_target, Rng& rng);

std::vector<int> candidate_select(size_t position, const TokenSequence& y, SampleSet& batch,
                                  size_t grad_samples, size_t candidates, const Model& unlearned,
                                  const Model& baseline, const TokenSequence& y_target, Rng& rng);

struct TryUpdateResult {
    TokenSequence seq;
    bool accepted = false;
    int best_candidate = 0;
    double ref_loss_before = 0.0;
    double ref_loss_after = 0.0;
};

// Picks the candidate minimizing the batch loss (ties toward the smaller
// id), accepts it only if it strictly improves the reference loss.
TryUpdateResult try_update(const TokenSequence& y, size_t position,
                           const std::vector<int>& candidates, SampleSet& batch,
                           SampleSet& reference, const Model& unlearned, const Model& baseline,
                           const TokenSequence& y_target);

AttackResult record_attack(const Model& unlearned, const Model& baseline,
                           const TokenSequence& y_target, const AttackConfig& cfg);

// The erased concept implied by a target prompt: its first concept token.
size_t target_concept(const TokenSequence& y_target, const ModelDims& dims);

std::string attack_result_to_json(const AttackResult& result);
AttackResult attack_result_from_json(const std::string& text);
void write_attack_result(const std::string& path, const AttackResult& result);
AttackResult read_attack_result(const std::string& path);

}  // namespace recordkit
