#include "recordkit/model.hpp"

#include <cmath>

#include "recordkit/errors.hpp"

namespace recordkit {

void validate_tokens(const TokenSequence& tokens, size_t vocab, size_t max_len) {
    if (tokens.ids.empty()) throw ConfigError("token sequence is empty");
    if (tokens.ids.size() > max_len) {
        throw ConfigError("token sequence length " + std::to_string(tokens.ids.size()) +
                          " exceeds max_len " + std::to_string(max_len));
    }
    for (int id : tokens.ids) {
        if (id < 0 || static_cast<size_t>(id) >= vocab) {
            throw ConfigError("token id " + std::to_string(id) + " out of range [0, " +
                              std::to_string(vocab) + ")");
        }
    }
}

Tensor tokens_to_tensor(const TokenSequence& tokens) {
    size_t n = tokens.ids.size();
    std::vector<double> ids(n);
    for (size_t i = 0; i < n; ++i) ids[i] = static_cast<double>(tokens.ids[i]);
    return Tensor({n}, std::move(ids));
}

const std::vector<Tensor>& TrajectoryRecord::tap(const std::string& name) const {
    if (name == "down.tap") return down_tap;
    if (name == "mid.tap") return mid_tap;
    throw ConfigError("unknown tap '" + name + "'");
}

TokenSequence Model::canonical_prompt(size_t concept_id) const {
    int tok = dataset.canonical_token(concept_id);
    TokenSequence seq;
    seq.ids.assign(dims.max_len, kPadToken);
    seq.ids[0] = tok;
    return seq;
}

TokenSequence Model::empty_prompt() const {
    TokenSequence seq;
    seq.ids.assign(dims.max_len, kPadToken);
    return seq;
}

EncoderGraph build_encoder_graph(const ModelDims& dims, size_t length, bool from_tokens) {
    if (length == 0 || length > dims.max_len) {
        throw ConfigError("encoder length " + std::to_string(length) + " out of range [1, " +
                          std::to_string(dims.max_len) + "]");
    }
    EncoderGraph eg;
    Graph& g = eg.g;
    eg.table = g.input("enc.table", {dims.vocab, dims.d_e});
    eg.pos = g.input("enc.pos", {dims.max_len, dims.d_e});
    eg.mix_w = g.input("enc.mix_w", {dims.d_e, dims.d_e});
    eg.mix_b = g.input("enc.mix_b", {dims.d_e});
    if (from_tokens) {
        eg.ids = g.input("enc.ids", {length});
        eg.embed = g.gather_rows(eg.table, eg.ids);
    } else {
        eg.embed = g.input("enc.embed", {length, dims.d_e});
    }
    NodeId pos_used = length == dims.max_len ? eg.pos : g.slice_rows(eg.pos, 0, length);
    NodeId x = g.add(eg.embed, pos_used);
    NodeId h = g.tanh(g.add_rowvec(g.matmul(x, eg.mix_w), eg.mix_b));
    eg.cond = g.block_mean_rows(h, length);
    return eg;
}

void bind_encoder_params(EncoderGraph& eg, const TextEncoder& enc) {
    eg.g.bind(eg.table, enc.table);
    eg.g.bind(eg.pos, enc.pos);
    eg.g.bind(eg.mix_w, enc.mix_w);
    eg.g.bind(eg.mix_b, enc.mix_b);
}

Tensor Model::encode_text(const TokenSequence& tokens) const {
    validate_tokens(tokens, dims.vocab, dims.max_len);
    EncoderGraph eg = build_encoder_graph(dims, tokens.size(), true);
    bind_encoder_params(eg, encoder);
    eg.g.bind(eg.ids, tokens_to_tensor(tokens));
    eg.g.forward();
    return eg.g.value(eg.cond);
}

Tensor Model::encode_embedding(const Tensor& embed) const {
    if (embed.rank() != 2 || embed.cols() != dims.d_e) {
        throw ShapeError("encode_embedding: expected [len, " + std::to_string(dims.d_e) +
                         "], got " + embed.shape_str());
    }
    EncoderGraph eg = build_encoder_graph(dims, embed.rows(), false);
    bind_encoder_params(eg, encoder);
    eg.g.bind(eg.embed, embed);
    eg.g.forward();
    return eg.g.value(eg.cond);
}

Tensor Model::prompt_embedding(const TokenSequence& tokens) const {
    validate_tokens(tokens, dims.vocab, dims.max_len);
    Tensor out({tokens.size(), dims.d_e});
    for (size_t s = 0; s < tokens.size(); ++s) {
        for (size_t c = 0; c < dims.d_e; ++c) {
            out.at(s, c) = encoder.table.at(static_cast<size_t>(tokens.ids[s]), c);
        }
    }
    return out;
}

Tensor Model::time_embedding(size_t t) const {
    return time_embedding_rows({t});
}

Tensor Model::time_embedding_rows(const std::vector<size_t>& ts) const {
    size_t half = dims.d_t / 2;
    double T = static_cast<double>(schedule.timesteps);
    Tensor out({ts.size(), dims.d_t});
    for (size_t r = 0; r < ts.size(); ++r) {
        if (ts[r] >= schedule.timesteps) {
            throw ConfigError("time embedding: t " + std::to_string(ts[r]) + " out of range");
        }
        double tv = static_cast<double>(ts[r]);
        for (size_t k = 0; k < half; ++k) {
            // frequencies geometric in [1, T]
            double freq = half > 1 ? std::pow(T, static_cast<double>(k) / (half - 1)) : 1.0;
            double angle = freq * tv / T;
            out.at(r, 2 * k) = std::sin(angle);
            out.at(r, 2 * k + 1) = std::cos(angle);
        }
    }
    return out;
}

void Model::refresh_cached() { empty_cond_ = encode_text(empty_prompt()); }

std::vector<Tensor*> Model::encoder_params() {
    return {&encoder.table, &encoder.pos, &encoder.mix_w, &encoder.mix_b};
}

std::vector<Tensor*> Model::denoiser_params() {
    return {&denoiser.w1, &denoiser.b1, &denoiser.w2, &denoiser.b2, &denoiser.w3, &denoiser.b3};
}

std::vector<const Tensor*> Model::denoiser_params() const {
    return {&denoiser.w1, &denoiser.b1, &denoiser.w2, &denoiser.b2, &denoiser.w3, &denoiser.b3};
}

namespace {
Tensor gaussian_tensor(std::vector<size_t> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.gaussian();
    return t;
}
}  // namespace

Model init_model(const ModelDims& dims, const Schedule& schedule, const ConceptDataset& dataset,
                 uint64_t master_seed) {
    if (dims.d_t % 2 != 0) throw ConfigError("d_t must be even for sinusoidal embeddings");
    if (dims.vocab < dims.concepts + 2) {
        throw ConfigError("vocab must cover pad + concept tokens + fillers");
    }
    Model m;
    m.dims = dims;
    m.schedule = schedule;
    m.dataset = dataset;

    Rng rng(master_seed, "init");
    m.encoder.table = gaussian_tensor({dims.vocab, dims.d_e}, 0.5, rng);
    m.encoder.pos = gaussian_tensor({dims.max_len, dims.d_e}, 0.5, rng);
    m.encoder.mix_w =
        gaussian_tensor({dims.d_e, dims.d_e}, 1.0 / std::sqrt(static_cast<double>(dims.d_e)), rng);
    m.encoder.mix_b = Tensor({dims.d_e}, 0.0);

    size_t d_in = dims.denoiser_input();
    m.denoiser.w1 =
        gaussian_tensor({d_in, dims.hidden}, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
    m.denoiser.b1 = Tensor({dims.hidden}, 0.0);
    m.denoiser.w2 = gaussian_tensor({dims.hidden, dims.hidden},
                                    1.0 / std::sqrt(static_cast<double>(dims.hidden)), rng);
    m.denoiser.b2 = Tensor({dims.hidden}, 0.0);
    m.denoiser.w3 = gaussian_tensor({dims.hidden, dims.d_z},
                                    1.0 / std::sqrt(static_cast<double>(dims.hidden)), rng);
    m.denoiser.b3 = Tensor({dims.d_z}, 0.0);
    m.refresh_cached();
    return m;
}

DenoiserNodes attach_denoiser(Graph& g, const ModelDims& dims, NodeId z, NodeId temb,
                              NodeId cond_rows, const std::string& prefix) {
    DenoiserNodes n;
    n.w1 = g.input(prefix + ".w1", {dims.denoiser_input(), dims.hidden});
    n.b1 = g.input(prefix + ".b1", {dims.hidden});
    n.w2 = g.input(prefix + ".w2", {dims.hidden, dims.hidden});
    n.b2 = g.input(prefix + ".b2", {dims.hidden});
    n.w3 = g.input(prefix + ".w3", {dims.hidden, dims.d_z});
    n.b3 = g.input(prefix + ".b3", {dims.d_z});
    NodeId x = g.concat_cols(g.concat_cols(z, temb), cond_rows);
    n.h1 = g.tanh(g.add_rowvec(g.matmul(x, n.w1), n.b1));
    n.h2 = g.tanh(g.add_rowvec(g.matmul(n.h1, n.w2), n.b2));
    n.out = g.add_rowvec(g.matmul(n.h2, n.w3), n.b3);
    return n;
}

void bind_denoiser_params(Graph& g, const DenoiserNodes& nodes, const Denoiser& den) {
    g.bind(nodes.w1, den.w1);
    g.bind(nodes.b1, den.b1);
    g.bind(nodes.w2, den.w2);
    g.bind(nodes.b2, den.b2);
    g.bind(nodes.w3, den.w3);
    g.bind(nodes.b3, den.b3);
}

CondLossGraph build_cond_loss_graph(const ModelDims& dims, size_t length, size_t batch) {
    if (batch == 0) throw ConfigError("cond loss graph: batch must be positive");
    CondLossGraph lg;
    Graph& g = lg.g;
    lg.embed = g.input("embed", {length, dims.d_e});
    NodeId pos = g.input("enc.pos", {dims.max_len, dims.d_e});
    NodeId mix_w = g.input("enc.mix_w", {dims.d_e, dims.d_e});
    NodeId mix_b = g.input("enc.mix_b", {dims.d_e});
    NodeId pos_used = length == dims.max_len ? pos : g.slice_rows(pos, 0, length);
    NodeId x = g.add(lg.embed, pos_used);
    NodeId h = g.tanh(g.add_rowvec(g.matmul(x, mix_w), mix_b));
    lg.cond = g.block_mean_rows(h, length);

    lg.z = g.input("z", {batch, dims.d_z});
    lg.temb = g.input("temb", {batch, dims.d_t});
    NodeId cond_rows = g.tile_rows(lg.cond, batch);
    lg.den = attach_denoiser(g, dims, lg.z, lg.temb, cond_rows, "den");
    lg.eps_out = lg.den.out;

    lg.target = g.input("target", {batch, dims.d_z});
    NodeId diff = g.sub(lg.eps_out, lg.target);
    lg.loss_sum = g.squared_l2(diff);
    lg.loss_mean = g.scale(lg.loss_sum, 1.0 / static_cast<double>(batch));
    return lg;
}

void bind_cond_loss_params(CondLossGraph& lg, const TextEncoder& enc, const Denoiser& den) {
    lg.g.bind("enc.pos", enc.pos);
    lg.g.bind("enc.mix_w", enc.mix_w);
    lg.g.bind("enc.mix_b", enc.mix_b);
    bind_denoiser_params(lg.g, lg.den, den);
}

DenoiserEval::DenoiserEval(const Model& model, size_t batch) : model_(model), batch_(batch) {
    z_ = g_.input("z", {batch, model.dims.d_z});
    temb_ = g_.input("temb", {batch, model.dims.d_t});
    cond_ = g_.input("cond", {batch, model.dims.d_e});
    DenoiserNodes n = attach_denoiser(g_, model.dims, z_, temb_, cond_, "den");
    h1_ = n.h1;
    h2_ = n.h2;
    out_ = n.out;
    bind_denoiser_params(g_, n, model.denoiser);
}

const Tensor& DenoiserEval::eval(const Tensor& z, const std::vector<size_t>& ts,
                                 const Tensor& cond) {
    if (ts.size() != batch_) throw ShapeError("DenoiserEval: timestep count mismatch");
    g_.bind(z_, z);
    g_.bind(temb_, model_.time_embedding_rows(ts));
    g_.bind(cond_, cond);
    g_.forward();
    return g_.value(out_);
}

SampleOutput sample(const Model& model, const TokenSequence& tokens, uint64_t seed,
                    bool record_taps, const std::string& model_id) {
    Tensor c = model.encode_text(tokens);
    SampleOutput out = sample_with_conditioning(model, c, seed, record_taps, model_id);
    if (record_taps) out.taps.prompt = tokens.ids;
    return out;
}

SampleOutput sample_with_conditioning(const Model& model, const Tensor& cond, uint64_t seed,
                                      bool record_taps, const std::string& model_id) {
    if (cond.numel() != model.dims.d_e) {
        throw ShapeError("sample: conditioning must have " + std::to_string(model.dims.d_e) +
                         " entries, got " + cond.shape_str());
    }
    Tensor c({1, model.dims.d_e}, cond.vec());
    size_t T = model.schedule.timesteps;
    size_t d = model.dims.d_z;

    Rng rng(seed, "sample");
    Tensor z({1, d});
    for (size_t i = 0; i < d; ++i) z[i] = rng.gaussian();

    SampleOutput out;
    out.has_taps = record_taps;
    if (record_taps) {
        out.taps.model_id = model_id;
        out.taps.seed = seed;
        out.taps.down_tap.reserve(T);
        out.taps.mid_tap.reserve(T);
    }

    DenoiserEval den(model, 1);
    for (size_t step = 0; step < T; ++step) {
        size_t t = T - 1 - step;
        const Tensor& eps_hat = den.eval(z, {t}, c);
        if (record_taps) {
            out.taps.down_tap.push_back(den.h1());
            out.taps.mid_tap.push_back(den.h2());
        }
        double beta = model.schedule.beta[t];
        double ab = model.schedule.alpha_bar[t];
        double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
        double eps_coef = beta / std::sqrt(1.0 - ab);
        for (size_t i = 0; i < d; ++i) {
            z[i] = inv_sqrt_alpha * (z[i] - eps_coef * eps_hat[i]);
        }
        if (t > 0) {
            double sd = std::sqrt(beta);
            for (size_t i = 0; i < d; ++i) z[i] += sd * rng.gaussian();
        }
        z.check_finite("sampling step t=" + std::to_string(t));
    }
    out.z0 = std::move(z);
    return out;
}

}  // namespace recordkit
