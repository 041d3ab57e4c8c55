#pragma once

#include <array>
#include <string>
#include <vector>

#include "recordkit/model.hpp"

namespace recordkit {

constexpr size_t kSimilarityBins = 64;  // fixed bins over [-1, 1]

double cosine(const Tensor& a, const Tensor& b);

struct SimilarityPair {
    double init_target = 0.0;
    double opt_target = 0.0;
    double opt_init = 0.0;
};

struct SimilarityReport {
    std::vector<SimilarityPair> pairs;
    std::array<size_t, kSimilarityBins> hist_init_target{};
    std::array<size_t, kSimilarityBins> hist_opt_target{};
    std::array<size_t, kSimilarityBins> hist_opt_init{};
};

size_t similarity_bin(double cosine_value);

// One optimization run reduced to its endpoints in embedding space;
// discrete-prompt runs pass their prompts through the embedding table
// first, continuous runs use their matrices directly.
struct EmbeddingRun {
    Tensor init;
    Tensor final;
};

SimilarityReport similarity_report(const std::vector<EmbeddingRun>& runs,
                                   const Tensor& target_embedding);

// Per-timestep L2 distance between tap activations of two recordings.
std::vector<double> trajectory_distance(const TrajectoryRecord& a, const TrajectoryRecord& b,
                                        const std::string& tap);

struct PcaResult {
    std::vector<std::array<double, 2>> coords;
    size_t components = 0;  // usable principal directions (<= 2)
    bool degenerate = false;
    std::vector<double> eigenvalues;  // scatter-matrix spectrum, descending
};

// Centers the points and projects onto the top principal directions of
// the scatter matrix; each direction's largest-magnitude coordinate is
// made positive so the output is deterministic.
PcaResult pca_project(const std::vector<Tensor>& points, size_t dims = 2);

void write_similarity_csv(const std::string& path, const SimilarityReport& report);
void write_similarity_pairs_csv(const std::string& path, const SimilarityReport& report);
void write_trajectory_csv(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<double>>>& curves);
void write_pca_csv(const std::string& path, const std::vector<std::string>& labels,
                   const PcaResult& pca);

}  // namespace recordkit
