#pragma once

// Tiny model pair shared by the attack tests: V=8, S_max=4, d_z=2.
// Exhaustive oracles stay cheap at this size.

#include "recordkit/erasure.hpp"
#include "recordkit/model.hpp"
#include "recordkit/train.hpp"

namespace fixture {

using namespace recordkit;

inline ModelDims attack_dims() {
    ModelDims d;
    d.d_z = 2;
    d.d_e = 4;
    d.d_t = 4;
    d.hidden = 8;
    d.vocab = 8;
    d.concepts = 2;
    d.max_len = 4;
    return d;
}

inline Model attack_baseline(uint64_t seed = 17, size_t steps = 0) {
    ModelDims d = attack_dims();
    Schedule s = make_schedule(8, 1e-3, 0.2);
    ConceptDataset ds = make_concept_dataset(d.concepts, d.d_z, 6.0, 1.0);
    if (steps == 0) return init_model(d, s, ds, seed);
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch = 16;
    cfg.lr = 3e-3;
    cfg.seed = seed;
    return train_denoiser(d, s, ds, cfg);
}

// A second random model standing in for the unlearned weights; attack
// oracles only need theta' != theta, not an actual erasure.
inline Model attack_unlearned(const Model& baseline, uint64_t seed = 18) {
    Model other = init_model(baseline.dims, baseline.schedule, baseline.dataset, seed);
    other.encoder = baseline.encoder;  // models share the text encoder
    other.refresh_cached();
    return other;
}

}  // namespace fixture
