#include "recordkit/evaluation.hpp"

#include <fstream>

#include "recordkit/errors.hpp"
#include "recordkit/schedule.hpp"

namespace recordkit {

namespace {
bool is_empty_prompt(const TokenSequence& t) {
    for (int id : t.ids) {
        if (id != kPadToken) return false;
    }
    return true;
}
}  // namespace

size_t ClassSet::empty_index() const {
    for (size_t i = 0; i < prompts.size(); ++i) {
        if (is_empty_prompt(prompts[i])) return i;
    }
    throw ConfigError("class set has no empty class");
}

void ClassSet::validate(const ModelDims& dims) const {
    if (prompts.size() < 2) throw ConfigError("class set needs at least 2 classes");
    size_t empties = 0;
    for (const auto& p : prompts) {
        validate_tokens(p, dims.vocab, dims.max_len);
        if (is_empty_prompt(p)) ++empties;
    }
    if (empties != 1) {
        throw ConfigError("class set must contain the empty class exactly once, found " +
                          std::to_string(empties));
    }
}

ClassSet default_class_set(const Model& classifier) {
    ClassSet cs;
    for (size_t k = 1; k <= classifier.dims.concepts; ++k) {
        cs.prompts.push_back(classifier.canonical_prompt(k));
    }
    cs.prompts.push_back(classifier.empty_prompt());
    cs.validate(classifier.dims);
    return cs;
}

std::vector<double> class_losses(const Tensor& z0, const Model& classifier,
                                 const ClassSet& classes, const ClassifierConfig& cfg,
                                 uint64_t draw_key) {
    if (cfg.samples == 0) throw ConfigError("classifier: samples must be positive");
    classes.validate(classifier.dims);
    z0.check_finite("classify input");
    size_t m = cfg.samples;
    size_t d = classifier.dims.d_z;
    size_t nc = classes.size();

    // One draw set per class, or one shared set replicated.
    auto draw = [&](uint64_t instance, std::vector<size_t>& ts, Tensor& eps) {
        Rng rng(cfg.seed, "classify", instance);
        for (size_t k = 0; k < m; ++k) {
            ts[k] = rng.uniform_int(classifier.schedule.timesteps);
            for (size_t i = 0; i < d; ++i) eps.at(k, i) = rng.gaussian();
        }
    };

    DenoiserEval den(classifier, m);
    std::vector<double> losses(nc);
    std::vector<size_t> ts(m);
    Tensor eps({m, d});
    if (cfg.shared_noise) draw(draw_key, ts, eps);
    for (size_t c = 0; c < nc; ++c) {
        if (!cfg.shared_noise) draw(draw_key * nc + c + 1, ts, eps);
        Tensor cond_row = classifier.encode_text(classes.prompts[c]);
        Tensor cond({m, classifier.dims.d_e});
        for (size_t k = 0; k < m; ++k) {
            for (size_t i = 0; i < classifier.dims.d_e; ++i) cond.at(k, i) = cond_row[i];
        }
        Tensor zts({m, d});
        for (size_t k = 0; k < m; ++k) {
            double a = std::sqrt(classifier.schedule.alpha_bar[ts[k]]);
            double b = std::sqrt(1.0 - classifier.schedule.alpha_bar[ts[k]]);
            for (size_t i = 0; i < d; ++i) zts.at(k, i) = a * z0[i] + b * eps.at(k, i);
        }
        const Tensor& pred = den.eval(zts, ts, cond);
        double acc = 0.0;
        for (size_t k = 0; k < m; ++k) {
            for (size_t i = 0; i < d; ++i) {
                double diff = eps.at(k, i) - pred.at(k, i);
                acc += diff * diff;
            }
        }
        losses[c] = acc / static_cast<double>(m);
    }
    return losses;
}

size_t classify(const Tensor& z0, const Model& classifier, const ClassSet& classes,
                const ClassifierConfig& cfg, uint64_t draw_key) {
    std::vector<double> losses = class_losses(z0, classifier, classes, cfg, draw_key);
    size_t best = 0;
    for (size_t c = 1; c < losses.size(); ++c) {
        if (losses[c] < losses[best]) best = c;
    }
    return best;
}

double asr(const std::vector<Tensor>& images, size_t target_class, const Model& classifier,
           const ClassSet& classes, const ClassifierConfig& cfg) {
    if (images.empty()) throw ConfigError("asr: image list is empty");
    if (target_class >= classes.size()) throw ConfigError("asr: target class out of range");
    size_t hits = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        if (classify(images[i], classifier, classes, cfg, i) == target_class) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(images.size());
}

std::vector<EvalRow> evaluate_images(const std::vector<Tensor>& images, size_t target_class,
                                     const Model& classifier, const ClassSet& classes,
                                     const ClassifierConfig& cfg) {
    std::vector<EvalRow> rows;
    rows.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
        EvalRow row;
        row.image_id = i;
        row.losses = class_losses(images[i], classifier, classes, cfg, i);
        row.predicted = 0;
        for (size_t c = 1; c < row.losses.size(); ++c) {
            if (row.losses[c] < row.losses[row.predicted]) row.predicted = c;
        }
        row.is_target = row.predicted == target_class;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_results_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    size_t nc = rows.empty() ? 0 : rows[0].losses.size();
    os << "image_id";
    for (size_t c = 0; c < nc; ++c) os << ",loss_" << c;
    os << ",predicted,is_target\n";
    os.precision(17);
    for (const auto& row : rows) {
        os << row.image_id;
        for (double v : row.losses) os << "," << v;
        os << "," << row.predicted << "," << (row.is_target ? 1 : 0) << "\n";
    }
}

}  // namespace recordkit
