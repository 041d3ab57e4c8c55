#pragma once

#include <string>
#include <vector>

#include "recordkit/model.hpp"

namespace recordkit {

// Classification classes: one prompt per concept plus the reserved empty
// class (all-pad prompt), present exactly once.
struct ClassSet {
    std::vector<TokenSequence> prompts;

    size_t size() const { return prompts.size(); }
    size_t empty_index() const;
    void validate(const ModelDims& dims) const;
};

// Concepts 1..C at indices 0..C-1, the empty class last.
ClassSet default_class_set(const Model& classifier);

struct ClassifierConfig {
    size_t samples = 10;  // (t, eps) draws per class
    bool shared_noise = true;
    uint64_t seed = 0;

    bool operator==(const ClassifierConfig&) const = default;
};

// Per-class expected denoising error of z0 under each class prompt,
// estimated over `samples` draws. With shared_noise every class sees the
// same (t, eps) draws, so ties are well defined.
std::vector<double> class_losses(const Tensor& z0, const Model& classifier,
                                 const ClassSet& classes, const ClassifierConfig& cfg,
                                 uint64_t draw_key = 0);

// argmin over class losses; ties resolve to the lowest index.
size_t classify(const Tensor& z0, const Model& classifier, const ClassSet& classes,
                const ClassifierConfig& cfg, uint64_t draw_key = 0);

// Fraction of images classified as the target class; draw_key = image index.
double asr(const std::vector<Tensor>& images, size_t target_class, const Model& classifier,
           const ClassSet& classes, const ClassifierConfig& cfg);

struct EvalRow {
    size_t image_id = 0;
    std::vector<double> losses;
    size_t predicted = 0;
    bool is_target = false;
};

std::vector<EvalRow> evaluate_images(const std::vector<Tensor>& images, size_t target_class,
                                     const Model& classifier, const ClassSet& classes,
                                     const ClassifierConfig& cfg);
void write_results_csv(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace recordkit
