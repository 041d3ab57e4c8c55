#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "recordkit/model.hpp"

namespace recordkit {

struct SampleItem {
    Tensor z_t;  // [1, d_z]
    size_t t = 0;
    Tensor eps;  // true forward-process noise
    bool has_eps = false;
};

// Noised latents with their timesteps; the frozen-model target predictions
// are cached per (target prompt) key so they are computed once per set.
struct SampleSet {
    std::vector<SampleItem> items;
    uint64_t seed = 0;  // provenance: stream that produced z0 and noise

    std::vector<Tensor> cached_targets;
    uint64_t cached_target_key = 0;

    size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

// z0 drawn from the concept's latent distribution.
SampleSet sample_set_from_concept(const Model& model, size_t concept_id, size_t count,
                                  uint64_t seed, std::string_view tag, uint64_t instance = 0);

// z0 supplied externally (e.g. generated by the baseline model).
SampleSet sample_set_from_latents(const Model& model, const std::vector<Tensor>& z0s,
                                  size_t count, uint64_t seed, std::string_view tag,
                                  uint64_t instance = 0);

uint64_t target_cache_key(const TokenSequence& y_target);

// Fills the cache of baseline predictions eps_theta(z_t, t, T(y_target)).
void precompute_targets(SampleSet& set, const Model& baseline, const TokenSequence& y_target);

// Union with concatenated items; caches are dropped.
SampleSet merge(const SampleSet& a, const SampleSet& b);

}  // namespace recordkit
