#pragma once

#include <cstddef>
#include <vector>

#include "recordkit/rng.hpp"
#include "recordkit/tensor.hpp"

namespace recordkit {

// Synthetic concept mixture: one isotropic Gaussian blob per concept in
// latent space, means pairwise separated well beyond sigma so that the
// nearest-mean rule is effectively the Bayes classifier.
struct ConceptDataset {
    Tensor means;        // [concepts, d_z]
    double sigma = 1.0;

    size_t concept_count() const { return means.rows(); }
    size_t latent_dim() const { return means.cols(); }

    // Canonical token for concept k (1-based concept ids, 0 is pad).
    int canonical_token(size_t concept_id) const;

    Tensor draw_z0(size_t concept_id, Rng& rng) const;
    // Nearest-mean rule, 1-based concept id.
    size_t bayes_classify(const Tensor& z0) const;
    double min_pairwise_mean_distance() const;
};

// Means placed on scaled coordinate axes: mean_k = separation * e_{k-1}.
ConceptDataset make_concept_dataset(size_t concepts, size_t latent_dim, double separation,
                                    double sigma);

}  // namespace recordkit
