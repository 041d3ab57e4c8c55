#include "recordkit/train.hpp"

#include <cmath>

#include "recordkit/errors.hpp"
#include "recordkit/optimizers.hpp"

namespace recordkit {

namespace {

struct TrainGraph {
    Graph g;
    NodeId ids = 0, z = 0, temb = 0, eps = 0;
    NodeId table = 0, pos = 0, mix_w = 0, mix_b = 0;
    DenoiserNodes den;
    NodeId loss = 0;
};

TrainGraph build_train_graph(const ModelDims& dims, size_t batch) {
    TrainGraph tg;
    Graph& g = tg.g;
    size_t S = dims.max_len;
    tg.ids = g.input("ids", {batch * S});
    tg.table = g.input("enc.table", {dims.vocab, dims.d_e});
    tg.pos = g.input("enc.pos", {S, dims.d_e});
    tg.mix_w = g.input("enc.mix_w", {dims.d_e, dims.d_e});
    tg.mix_b = g.input("enc.mix_b", {dims.d_e});

    NodeId embed = g.gather_rows(tg.table, tg.ids);          // [B*S, d_e]
    NodeId pos_tiled = g.tile_rows(tg.pos, batch);           // [B*S, d_e]
    NodeId x = g.add(embed, pos_tiled);
    NodeId h = g.tanh(g.add_rowvec(g.matmul(x, tg.mix_w), tg.mix_b));
    NodeId cond = g.block_mean_rows(h, S);                   // [B, d_e]

    tg.z = g.input("z", {batch, dims.d_z});
    tg.temb = g.input("temb", {batch, dims.d_t});
    tg.den = attach_denoiser(g, dims, tg.z, tg.temb, cond, "den");

    tg.eps = g.input("eps", {batch, dims.d_z});
    NodeId diff = g.sub(tg.den.out, tg.eps);
    tg.loss = g.scale(g.squared_l2(diff), 1.0 / static_cast<double>(batch));
    return tg;
}

void bind_params(TrainGraph& tg, const Model& m) {
    tg.g.bind(tg.table, m.encoder.table);
    tg.g.bind(tg.pos, m.encoder.pos);
    tg.g.bind(tg.mix_w, m.encoder.mix_w);
    tg.g.bind(tg.mix_b, m.encoder.mix_b);
    bind_denoiser_params(tg.g, tg.den, m.denoiser);
}

std::vector<NodeId> param_nodes(const TrainGraph& tg) {
    return {tg.table,  tg.pos,    tg.mix_w,  tg.mix_b,  tg.den.w1,
            tg.den.b1, tg.den.w2, tg.den.b2, tg.den.w3, tg.den.b3};
}

struct Batch {
    Tensor ids_flat;
    Tensor z_t;
    Tensor temb;
    Tensor eps;
};

std::vector<int> sample_prompt(const ModelDims& dims, double uncond_prob, double pad_prob,
                               Rng& rng, size_t* concept_out) {
    std::vector<int> ids(dims.max_len, kPadToken);
    size_t concept_id = 1 + rng.uniform_int(dims.concepts);
    *concept_out = concept_id;
    if (rng.uniform() < uncond_prob) return ids;  // empty prompt, z0 still concept-drawn
    size_t pos = rng.uniform_int(dims.max_len);
    size_t filler_count = dims.vocab - dims.concepts - 1;
    for (size_t s = 0; s < dims.max_len; ++s) {
        if (s == pos) {
            ids[s] = static_cast<int>(concept_id);
        } else if (rng.uniform() >= pad_prob) {
            ids[s] = static_cast<int>(dims.concepts + 1 + rng.uniform_int(filler_count));
        }
    }
    return ids;
}

Batch draw_batch(const Model& m, size_t batch, double uncond_prob, double pad_prob, Rng& rng) {
    const ModelDims& dims = m.dims;
    size_t S = dims.max_len;
    Batch b{Tensor({batch * S}), Tensor({batch, dims.d_z}), Tensor(), Tensor({batch, dims.d_z})};
    std::vector<size_t> ts(batch);
    for (size_t r = 0; r < batch; ++r) {
        size_t concept_id = 0;
        std::vector<int> ids = sample_prompt(dims, uncond_prob, pad_prob, rng, &concept_id);
        for (size_t s = 0; s < S; ++s) b.ids_flat[r * S + s] = static_cast<double>(ids[s]);
        Tensor z0 = m.dataset.draw_z0(concept_id, rng);
        ts[r] = rng.uniform_int(m.schedule.timesteps);
        for (size_t i = 0; i < dims.d_z; ++i) b.eps.at(r, i) = rng.gaussian();
        double a = std::sqrt(m.schedule.alpha_bar[ts[r]]);
        double c = std::sqrt(1.0 - m.schedule.alpha_bar[ts[r]]);
        for (size_t i = 0; i < dims.d_z; ++i) b.z_t.at(r, i) = a * z0[i] + c * b.eps.at(r, i);
    }
    b.temb = m.time_embedding_rows(ts);
    return b;
}

void bind_batch(TrainGraph& tg, const Batch& b) {
    tg.g.bind(tg.ids, b.ids_flat);
    tg.g.bind(tg.z, b.z_t);
    tg.g.bind(tg.temb, b.temb);
    tg.g.bind(tg.eps, b.eps);
}

}  // namespace

Model train_denoiser(const ModelDims& dims, const Schedule& schedule,
                     const ConceptDataset& dataset, const TrainConfig& cfg) {
    Model m = init_model(dims, schedule, dataset, cfg.seed);
    if (cfg.steps == 0) return m;
    if (cfg.batch == 0) throw ConfigError("train: batch must be positive");

    TrainGraph tg = build_train_graph(dims, cfg.batch);
    std::vector<NodeId> pnodes = param_nodes(tg);
    std::vector<Tensor*> params;
    for (Tensor* p : m.encoder_params()) params.push_back(p);
    for (Tensor* p : m.denoiser_params()) params.push_back(p);
    Adam opt(params, cfg.lr);

    Rng data(cfg.seed, "train.data");
    double initial_loss = -1.0;
    int bad_streak = 0;
    double loss = 0.0;
    for (size_t step = 0; step < cfg.steps; ++step) {
        Batch b = draw_batch(m, cfg.batch, cfg.uncond_prob, cfg.pad_prob, data);
        bind_params(tg, m);
        bind_batch(tg, b);
        tg.g.forward();
        loss = tg.g.value(tg.loss)[0];
        if (initial_loss < 0.0) initial_loss = loss;
        if (loss > 10.0 * initial_loss) {
            if (++bad_streak >= 100) {
                throw NumericalError("training diverged: loss " + std::to_string(loss) +
                                     " exceeded 10x initial for 100 consecutive steps");
            }
        } else {
            bad_streak = 0;
        }
        auto grads = tg.g.backward(tg.loss, pnodes);
        std::vector<Tensor> ordered;
        ordered.reserve(pnodes.size());
        for (NodeId id : pnodes) ordered.push_back(std::move(grads.at(id)));
        opt.step(ordered);
    }
    m.final_train_loss = loss;
    m.refresh_cached();
    return m;
}

double training_loss(const Model& model, size_t batch, uint64_t seed, double uncond_prob,
                     double pad_prob) {
    if (batch == 0) throw ConfigError("training_loss: batch must be positive");
    TrainGraph tg = build_train_graph(model.dims, batch);
    Rng data(seed, "train.holdout");
    Batch b = draw_batch(model, batch, uncond_prob, pad_prob, data);
    bind_params(tg, model);
    bind_batch(tg, b);
    tg.g.forward();
    return tg.g.value(tg.loss)[0];
}

}  // namespace recordkit
