#include "recordkit/erasure.hpp"

#include <cmath>

#include "recordkit/errors.hpp"
#include "recordkit/optimizers.hpp"

namespace recordkit {

namespace {

struct DenLossGraph {
    Graph g;
    NodeId z = 0, temb = 0, cond = 0, target = 0;
    DenoiserNodes den;
    NodeId loss_mean = 0;
};

DenLossGraph build_den_loss_graph(const ModelDims& dims, size_t batch) {
    DenLossGraph lg;
    Graph& g = lg.g;
    lg.z = g.input("z", {batch, dims.d_z});
    lg.temb = g.input("temb", {batch, dims.d_t});
    lg.cond = g.input("cond", {batch, dims.d_e});
    lg.den = attach_denoiser(g, dims, lg.z, lg.temb, lg.cond, "den");
    lg.target = g.input("target", {batch, dims.d_z});
    NodeId diff = g.sub(lg.den.out, lg.target);
    lg.loss_mean = g.scale(g.squared_l2(diff), 1.0 / static_cast<double>(batch));
    return lg;
}

std::vector<NodeId> den_param_nodes(const DenLossGraph& lg) {
    return {lg.den.w1, lg.den.b1, lg.den.w2, lg.den.b2, lg.den.w3, lg.den.b3};
}

struct ProbeBatch {
    Tensor z;  // [B, d_z] noised latents
    std::vector<size_t> ts;
};

ProbeBatch draw_concept_batch(const Model& m, const std::vector<size_t>& concepts,
                              size_t per_concept, Rng& rng) {
    size_t B = concepts.size() * per_concept;
    size_t d = m.dims.d_z;
    ProbeBatch b{Tensor({B, d}), std::vector<size_t>(B)};
    size_t row = 0;
    for (size_t concept_id : concepts) {
        for (size_t i = 0; i < per_concept; ++i, ++row) {
            Tensor z0 = m.dataset.draw_z0(concept_id, rng);
            b.ts[row] = rng.uniform_int(m.schedule.timesteps);
            double a = std::sqrt(m.schedule.alpha_bar[b.ts[row]]);
            double c = std::sqrt(1.0 - m.schedule.alpha_bar[b.ts[row]]);
            for (size_t k = 0; k < d; ++k) b.z.at(row, k) = a * z0[k] + c * rng.gaussian();
        }
    }
    return b;
}

Tensor repeat_cond(const Tensor& row, size_t batch) {
    Tensor out({batch, row.numel()});
    for (size_t r = 0; r < batch; ++r) {
        for (size_t i = 0; i < row.numel(); ++i) out.at(r, i) = row[i];
    }
    return out;
}

// Guidance target for the erased concept, computed with the frozen model.
Tensor erased_target(const Tensor& pred_erased, const Tensor& pred_empty, double eta) {
    Tensor t(pred_erased.shape());
    for (size_t i = 0; i < t.numel(); ++i) {
        t[i] = pred_empty[i] - eta * (pred_erased[i] - pred_empty[i]);
    }
    return t;
}

struct ErasureContext {
    std::vector<size_t> retained;
    Tensor c_empty, c_erased;
    std::vector<Tensor> c_retained;
};

ErasureContext make_context(const Model& theta, const ErasureConfig& cfg) {
    ErasureContext ctx;
    for (size_t k = 1; k <= theta.dims.concepts; ++k) {
        if (k != cfg.concept_id) ctx.retained.push_back(k);
    }
    ctx.c_empty = theta.encode_text(theta.empty_prompt());
    ctx.c_erased = theta.encode_text(theta.canonical_prompt(cfg.concept_id));
    for (size_t k : ctx.retained) {
        ctx.c_retained.push_back(theta.encode_text(theta.canonical_prompt(k)));
    }
    return ctx;
}

}  // namespace

Model erase_concept(const Model& theta, const ErasureConfig& cfg) {
    if (cfg.concept_id < 1 || cfg.concept_id > theta.dims.concepts) {
        throw ConfigError("erasure: concept id out of range");
    }
    if (cfg.eta < 0.0 || cfg.lambda < 0.0) {
        throw ConfigError("erasure: eta and lambda must be non-negative");
    }
    Model theta_prime = theta;
    if (cfg.steps == 0) return theta_prime;
    if (cfg.batch_per_concept == 0) {
        throw ConfigError("erasure: batch_per_concept must be positive");
    }

    const ModelDims& dims = theta.dims;
    size_t m = cfg.batch_per_concept;
    ErasureContext ctx = make_context(theta, cfg);
    size_t B_r = ctx.retained.size() * m;

    DenLossGraph erased_g = build_den_loss_graph(dims, m);
    DenoiserEval frozen_small(theta, m);
    Tensor cond_er_rows = repeat_cond(ctx.c_erased, m);
    Tensor cond_em_rows = repeat_cond(ctx.c_empty, m);

    bool has_retained = B_r > 0;
    DenLossGraph retain_g;
    Tensor cond_re_rows;
    DenoiserEval frozen_big(theta, has_retained ? B_r : 1);
    if (has_retained) {
        retain_g = build_den_loss_graph(dims, B_r);
        cond_re_rows = Tensor({B_r, dims.d_e});
        for (size_t j = 0; j < ctx.retained.size(); ++j) {
            for (size_t r = 0; r < m; ++r) {
                for (size_t i = 0; i < dims.d_e; ++i) {
                    cond_re_rows.at(j * m + r, i) = ctx.c_retained[j][i];
                }
            }
        }
    }

    Adam opt(theta_prime.denoiser_params(), cfg.lr);
    Rng data(cfg.seed, "erase.data");
    // Sum over retained concepts of per-concept means equals
    // (#retained) * mean over the pooled retained batch.
    double retain_weight = cfg.lambda * static_cast<double>(ctx.retained.size());

    double initial_loss = -1.0;
    int bad_streak = 0;
    for (size_t step = 0; step < cfg.steps; ++step) {
        ProbeBatch eb = draw_concept_batch(theta, {cfg.concept_id}, m, data);
        Tensor temb_e = theta.time_embedding_rows(eb.ts);
        Tensor pred_er = frozen_small.eval(eb.z, eb.ts, cond_er_rows);
        Tensor pred_em = frozen_small.eval(eb.z, eb.ts, cond_em_rows);
        Tensor target_e = erased_target(pred_er, pred_em, cfg.eta);

        bind_denoiser_params(erased_g.g, erased_g.den, theta_prime.denoiser);
        erased_g.g.bind(erased_g.z, eb.z);
        erased_g.g.bind(erased_g.temb, temb_e);
        erased_g.g.bind(erased_g.cond, cond_er_rows);
        erased_g.g.bind(erased_g.target, target_e);
        erased_g.g.forward();
        double loss = erased_g.g.value(erased_g.loss_mean)[0];
        auto grads_e = erased_g.g.backward(erased_g.loss_mean, den_param_nodes(erased_g));

        std::vector<Tensor> total;
        auto pn_e = den_param_nodes(erased_g);
        for (NodeId id : pn_e) total.push_back(std::move(grads_e.at(id)));

        if (has_retained && retain_weight > 0.0) {
            ProbeBatch rb = draw_concept_batch(theta, ctx.retained, m, data);
            Tensor temb_r = theta.time_embedding_rows(rb.ts);
            Tensor target_r = frozen_big.eval(rb.z, rb.ts, cond_re_rows);

            bind_denoiser_params(retain_g.g, retain_g.den, theta_prime.denoiser);
            retain_g.g.bind(retain_g.z, rb.z);
            retain_g.g.bind(retain_g.temb, temb_r);
            retain_g.g.bind(retain_g.cond, cond_re_rows);
            retain_g.g.bind(retain_g.target, target_r);
            retain_g.g.forward();
            loss += retain_weight * retain_g.g.value(retain_g.loss_mean)[0];
            auto grads_r = retain_g.g.backward(retain_g.loss_mean, den_param_nodes(retain_g));
            auto pn_r = den_param_nodes(retain_g);
            for (size_t p = 0; p < total.size(); ++p) {
                const Tensor& gr = grads_r.at(pn_r[p]);
                for (size_t i = 0; i < total[p].numel(); ++i) {
                    total[p][i] += retain_weight * gr[i];
                }
            }
        }

        if (initial_loss < 0.0) initial_loss = loss;
        if (loss > 10.0 * initial_loss) {
            if (++bad_streak >= 100) {
                throw NumericalError("erasure diverged: loss " + std::to_string(loss) +
                                     " exceeded 10x initial for 100 consecutive steps");
            }
        } else {
            bad_streak = 0;
        }
        opt.step(total);
    }
    theta_prime.refresh_cached();
    return theta_prime;
}

ErasureLossParts erasure_loss(const Model& theta_prime, const Model& theta,
                              const ErasureConfig& cfg, uint64_t probe_seed) {
    if (cfg.concept_id < 1 || cfg.concept_id > theta.dims.concepts) {
        throw ConfigError("erasure: concept id out of range");
    }
    const ModelDims& dims = theta.dims;
    size_t m = cfg.batch_per_concept;
    if (m == 0) throw ConfigError("erasure: batch_per_concept must be positive");
    ErasureContext ctx = make_context(theta, cfg);

    Rng probe(probe_seed, "erase.probe");
    ErasureLossParts parts;

    DenoiserEval frozen(theta, m);
    DenoiserEval tuned(theta_prime, m);

    ProbeBatch eb = draw_concept_batch(theta, {cfg.concept_id}, m, probe);
    Tensor cond_er = repeat_cond(ctx.c_erased, m);
    Tensor cond_em = repeat_cond(ctx.c_empty, m);
    Tensor pred_er = frozen.eval(eb.z, eb.ts, cond_er);
    Tensor pred_em = frozen.eval(eb.z, eb.ts, cond_em);
    Tensor target_e = erased_target(pred_er, pred_em, cfg.eta);
    Tensor mine = tuned.eval(eb.z, eb.ts, cond_er);
    double acc = 0.0;
    for (size_t i = 0; i < mine.numel(); ++i) {
        double diff = mine[i] - target_e[i];
        acc += diff * diff;
    }
    parts.erased = acc / static_cast<double>(m);

    for (size_t j = 0; j < ctx.retained.size(); ++j) {
        ProbeBatch rb = draw_concept_batch(theta, {ctx.retained[j]}, m, probe);
        Tensor cond_k = repeat_cond(ctx.c_retained[j], m);
        Tensor target_k = frozen.eval(rb.z, rb.ts, cond_k);
        Tensor mine_k = tuned.eval(rb.z, rb.ts, cond_k);
        double acc_k = 0.0;
        for (size_t i = 0; i < mine_k.numel(); ++i) {
            double diff = mine_k[i] - target_k[i];
            acc_k += diff * diff;
        }
        parts.retention += acc_k / static_cast<double>(m);
    }
    return parts;
}

double no_attack_baseline(const Model& theta_prime, const Model& classifier, size_t concept_id,
                          size_t n_images, uint64_t seed, const ClassifierConfig& ccfg) {
    if (n_images == 0) throw ConfigError("no_attack_baseline: n_images must be positive");
    TokenSequence prompt = theta_prime.canonical_prompt(concept_id);
    std::vector<Tensor> images;
    images.reserve(n_images);
    Rng seeds(seed, "noattack.seeds");
    for (size_t i = 0; i < n_images; ++i) {
        images.push_back(sample(theta_prime, prompt, seeds.next_u64()).z0);
    }
    ClassSet classes = default_class_set(classifier);
    return asr(images, concept_id - 1, classifier, classes, ccfg);
}

}  // namespace recordkit
