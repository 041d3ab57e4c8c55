#include "recordkit/sampleset.hpp"

#include <cmath>

#include "recordkit/errors.hpp"
#include "recordkit/schedule.hpp"

namespace recordkit {

namespace {
SampleItem make_item(const Model& model, const Tensor& z0, Rng& rng) {
    SampleItem item;
    item.t = rng.uniform_int(model.schedule.timesteps);
    size_t d = model.dims.d_z;
    Tensor eps({1, d});
    for (size_t i = 0; i < d; ++i) eps[i] = rng.gaussian();
    item.z_t = q_sample(z0, item.t, eps, model.schedule);
    item.eps = std::move(eps);
    item.has_eps = true;
    return item;
}
}  // namespace

SampleSet sample_set_from_concept(const Model& model, size_t concept_id, size_t count,
                                  uint64_t seed, std::string_view tag, uint64_t instance) {
    if (count == 0) throw ConfigError("sample set: count must be positive");
    Rng rng(seed, tag, instance);
    SampleSet set;
    set.seed = rng.key();
    set.items.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        Tensor z0 = model.dataset.draw_z0(concept_id, rng);
        set.items.push_back(make_item(model, z0, rng));
    }
    return set;
}

SampleSet sample_set_from_latents(const Model& model, const std::vector<Tensor>& z0s,
                                  size_t count, uint64_t seed, std::string_view tag,
                                  uint64_t instance) {
    if (count == 0) throw ConfigError("sample set: count must be positive");
    if (z0s.empty()) throw ConfigError("sample set: z0 pool is empty");
    Rng rng(seed, tag, instance);
    SampleSet set;
    set.seed = rng.key();
    set.items.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const Tensor& z0 = z0s[rng.uniform_int(z0s.size())];
        set.items.push_back(make_item(model, z0, rng));
    }
    return set;
}

uint64_t target_cache_key(const TokenSequence& y_target) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (int id : y_target.ids) {
        h ^= static_cast<uint64_t>(id) + 0x9e3779b97f4a7c15ull;
        h *= 0x100000001b3ull;
    }
    return h == 0 ? 1 : h;
}

void precompute_targets(SampleSet& set, const Model& baseline, const TokenSequence& y_target) {
    if (set.empty()) throw ConfigError("sample set is empty");
    uint64_t key = target_cache_key(y_target);
    if (set.cached_target_key == key && set.cached_targets.size() == set.items.size()) return;

    Tensor c = baseline.encode_text(y_target);
    DenoiserEval den(baseline, 1);
    set.cached_targets.clear();
    set.cached_targets.reserve(set.items.size());
    for (const SampleItem& item : set.items) {
        set.cached_targets.push_back(den.eval(item.z_t, {item.t}, c));
    }
    set.cached_target_key = key;
}

SampleSet merge(const SampleSet& a, const SampleSet& b) {
    SampleSet out;
    out.seed = a.seed;
    out.items = a.items;
    out.items.insert(out.items.end(), b.items.begin(), b.items.end());
    return out;
}

}  // namespace recordkit
