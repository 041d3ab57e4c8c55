#pragma once

#include "recordkit/evaluation.hpp"
#include "recordkit/model.hpp"

namespace recordkit {

struct ErasureConfig {
    size_t concept_id = 1;  // in [1, concepts]
    double eta = 1.0;       // negative-guidance strength
    double lambda = 1.0;    // retention weight
    size_t steps = 2000;
    double lr = 1e-4;
    size_t batch_per_concept = 16;
    uint64_t seed = 0;

    bool operator==(const ErasureConfig&) const = default;
};

struct ErasureLossParts {
    double erased = 0.0;     // mean over the erased-concept batch
    double retention = 0.0;  // sum over retained concepts of their batch means
    double total(double lambda) const { return erased + lambda * retention; }
};

// Fine-tunes only the denoiser of a copy of theta: the erased-concept
// conditioning is steered toward
//   eps_theta(z,t,c_empty) - eta * (eps_theta(z,t,c_erased) - eps_theta(z,t,c_empty))
// while every retained concept is distilled to theta's own prediction,
// weighted by lambda. theta stays frozen throughout.
Model erase_concept(const Model& theta, const ErasureConfig& cfg);

// Monte-Carlo estimate of the erasure objective at (theta_prime, theta);
// used by fixed-point and monotonicity checks.
ErasureLossParts erasure_loss(const Model& theta_prime, const Model& theta,
                              const ErasureConfig& cfg, uint64_t probe_seed);

// Generates n_images from theta_prime with the concept's canonical prompt
// and returns the fraction the classifier assigns to that concept.
double no_attack_baseline(const Model& theta_prime, const Model& classifier, size_t concept_id,
                          size_t n_images, uint64_t seed,
                          const ClassifierConfig& ccfg = ClassifierConfig{});

}  // namespace recordkit
