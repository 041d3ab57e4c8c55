#include "recordkit/dataset.hpp"

#include <cmath>
#include <limits>

#include "recordkit/errors.hpp"

namespace recordkit {

int ConceptDataset::canonical_token(size_t concept_id) const {
    if (concept_id < 1 || concept_id > concept_count()) {
        throw ConfigError("concept id " + std::to_string(concept_id) + " out of range [1, " +
                          std::to_string(concept_count()) + "]");
    }
    return static_cast<int>(concept_id);
}

Tensor ConceptDataset::draw_z0(size_t concept_id, Rng& rng) const {
    canonical_token(concept_id);
    size_t d = latent_dim();
    std::vector<double> z(d);
    for (size_t i = 0; i < d; ++i) {
        z[i] = means.at(concept_id - 1, i) + sigma * rng.gaussian();
    }
    return Tensor({1, d}, std::move(z));
}

size_t ConceptDataset::bayes_classify(const Tensor& z0) const {
    if (z0.numel() != latent_dim()) {
        throw ShapeError("bayes_classify: latent size mismatch " + z0.shape_str());
    }
    size_t best = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < concept_count(); ++k) {
        double d = 0.0;
        for (size_t i = 0; i < latent_dim(); ++i) {
            double diff = z0[i] - means.at(k, i);
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = k + 1;
        }
    }
    return best;
}

double ConceptDataset::min_pairwise_mean_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (size_t a = 0; a < concept_count(); ++a) {
        for (size_t b = a + 1; b < concept_count(); ++b) {
            double d = 0.0;
            for (size_t i = 0; i < latent_dim(); ++i) {
                double diff = means.at(a, i) - means.at(b, i);
                d += diff * diff;
            }
            best = std::min(best, std::sqrt(d));
        }
    }
    return best;
}

ConceptDataset make_concept_dataset(size_t concepts, size_t latent_dim, double separation,
                                    double sigma) {
    if (concepts == 0) throw ConfigError("dataset: concepts must be positive");
    if (latent_dim < concepts) {
        throw ConfigError("dataset: latent_dim must be >= concepts for axis-aligned means");
    }
    if (!(sigma > 0.0)) throw ConfigError("dataset: sigma must be positive");
    Tensor means({concepts, latent_dim}, 0.0);
    for (size_t k = 0; k < concepts; ++k) means.at(k, k) = separation;
    ConceptDataset ds{std::move(means), sigma};
    return ds;
}

}  // namespace recordkit
