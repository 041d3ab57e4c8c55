#pragma once

#include <cstdint>

#include "recordkit/model.hpp"

namespace recordkit {

struct TrainConfig {
    size_t steps = 5000;
    size_t batch = 64;
    double lr = 1e-3;
    // Fraction of examples conditioned on the empty prompt, so the empty
    // conditioning stands in for an unconditional prediction.
    double uncond_prob = 0.1;
    // Non-concept positions are pad with this probability, else a uniform
    // filler token.
    double pad_prob = 0.5;
    uint64_t seed = 0;

    bool operator==(const TrainConfig&) const = default;
};

// Monte-Carlo denoising objective: mean over the batch of
// ||eps - eps_theta(z_t, t, c)||^2 with c from per-example prompts that
// place the concept token at a random position among filler tokens.
Model train_denoiser(const ModelDims& dims, const Schedule& schedule,
                     const ConceptDataset& dataset, const TrainConfig& cfg);

// Objective estimate on a freshly drawn batch; used for held-out checks.
double training_loss(const Model& model, size_t batch, uint64_t seed, double uncond_prob = 0.1,
                     double pad_prob = 0.5);

}  // namespace recordkit
