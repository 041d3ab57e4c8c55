#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "recordkit/checkpoint.hpp"
#include "recordkit/errors.hpp"
#include "recordkit/model.hpp"
#include "recordkit/schedule.hpp"
#include "recordkit/train.hpp"

using namespace recordkit;

namespace {

ModelDims tiny_dims() {
    ModelDims d;
    d.d_z = 4;
    d.d_e = 6;
    d.d_t = 4;
    d.hidden = 16;
    d.vocab = 12;
    d.concepts = 2;
    d.max_len = 5;
    return d;
}

Model tiny_model(uint64_t seed = 0) {
    ModelDims d = tiny_dims();
    Schedule s = make_schedule(20, 1e-3, 0.2);
    ConceptDataset ds = make_concept_dataset(d.concepts, d.d_z, 6.0, 1.0);
    return init_model(d, s, ds, seed);
}

}  // namespace

TEST_CASE("make_schedule basics") {
    Schedule s1 = make_schedule(1, 1e-4, 1e-4);
    CHECK(s1.alpha_bar.size() == 1);
    CHECK(s1.alpha_bar[0] == doctest::Approx(0.9999).epsilon(1e-12));

    Schedule s = make_schedule(50, 1e-4, 0.05);
    for (size_t t = 1; t < s.timesteps; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK(s.alpha_bar[0] == doctest::Approx(1.0 - s.beta[0]).epsilon(1e-15));

    CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.5, 0.2), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.5, 1.0), ConfigError);
}

TEST_CASE("make_schedule final product matches reverse-order oracle") {
    Schedule s = make_schedule(100, 1e-4, 0.02);
    double expect = oracles::product_reversed(s.beta);
    CHECK(std::fabs(s.alpha_bar[99] - expect) < 1e-12);
}

TEST_CASE("q_sample identities") {
    Schedule s = make_schedule(10, 1e-3, 0.3);
    Tensor z0({1, 3}, {1.0, -2.0, 0.5});
    Tensor zero({1, 3}, 0.0);
    Tensor zt = q_sample(z0, 4, zero, s);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(zt[i] == doctest::Approx(std::sqrt(s.alpha_bar[4]) * z0[i]).epsilon(1e-15));
    }
    CHECK_THROWS_AS(q_sample(z0, 10, zero, s), ConfigError);
    CHECK_THROWS_AS(q_sample(z0, 3, Tensor({1, 2}, 0.0), s), ShapeError);
}

TEST_CASE("q_sample noise coefficient in the small alpha_bar limit") {
    // sqrt(1 - a) >= 0.99 exactly when a <= 0.0199.
    Schedule s = make_schedule(1000, 1e-4, 0.02);
    size_t t = 0;
    while (s.alpha_bar[t] > 0.0199) ++t;
    double coef = std::sqrt(1.0 - s.alpha_bar[t]);
    CHECK(coef >= 0.99);
}

TEST_CASE("q_sample Monte-Carlo variance matches 1 - alpha_bar") {
    Schedule s = make_schedule(40, 1e-3, 0.1);
    size_t t = 25;
    Tensor z0({1, 1}, {2.0});
    Rng rng(3, "mc");
    const int n = 10000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        Tensor eps({1, 1}, {rng.gaussian()});
        double v = q_sample(z0, t, eps, s)[0];
        sum += v;
        sq += v * v;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    double expect = 1.0 - s.alpha_bar[t];
    CHECK(std::fabs(var - expect) / expect < 0.05);
}

TEST_CASE("encode_text: all-pad prompt returns the cached empty conditioning") {
    Model m = tiny_model();
    Tensor c = m.encode_text(m.empty_prompt());
    CHECK(c == m.empty_conditioning());
}

TEST_CASE("encode_text: permuting tokens changes the conditioning") {
    Model m = tiny_model();
    TokenSequence a{{3, 7, 1, 0, 5}};
    TokenSequence b{{5, 7, 1, 0, 3}};
    Tensor ca = m.encode_text(a);
    Tensor cb = m.encode_text(b);
    bool differs = false;
    for (size_t i = 0; i < ca.numel(); ++i) differs |= ca[i] != cb[i];
    CHECK(differs);
}

TEST_CASE("encode_text: single token equals mixed embedding row") {
    Model m = tiny_model();
    TokenSequence one{{4}};
    Tensor c = m.encode_text(one);
    std::vector<double> row(m.dims.d_e);
    for (size_t i = 0; i < m.dims.d_e; ++i) {
        row[i] = m.encoder.table.at(4, i) + m.encoder.pos.at(0, i);
    }
    auto expect = oracles::encoder_reference({row}, m.encoder.mix_w, m.encoder.mix_b);
    for (size_t i = 0; i < c.numel(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("encode_text matches straight-line reference on a full prompt") {
    Model m = tiny_model(5);
    TokenSequence y{{2, 0, 9, 11, 1}};
    Tensor c = m.encode_text(y);
    std::vector<std::vector<double>> rows;
    for (size_t s = 0; s < y.size(); ++s) {
        std::vector<double> row(m.dims.d_e);
        for (size_t i = 0; i < m.dims.d_e; ++i) {
            row[i] = m.encoder.table.at(static_cast<size_t>(y.ids[s]), i) + m.encoder.pos.at(s, i);
        }
        rows.push_back(std::move(row));
    }
    auto expect = oracles::encoder_reference(rows, m.encoder.mix_w, m.encoder.mix_b);
    for (size_t i = 0; i < c.numel(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("encode_text rejects invalid prompts") {
    Model m = tiny_model();
    CHECK_THROWS_AS(m.encode_text(TokenSequence{{12}}), ConfigError);
    CHECK_THROWS_AS(m.encode_text(TokenSequence{{}}), ConfigError);
    CHECK_THROWS_AS(m.encode_text(TokenSequence{{1, 1, 1, 1, 1, 1}}), ConfigError);
}

TEST_CASE("encoder conditioning gradient wrt table rows matches finite differences") {
    Model m = tiny_model(2);
    TokenSequence y{{3, 3, 0, 7, 2}};
    EncoderGraph eg = build_encoder_graph(m.dims, y.size(), true);
    NodeId loss = eg.g.squared_l2(eg.cond);
    bind_encoder_params(eg, m.encoder);
    eg.g.bind(eg.ids, tokens_to_tensor(y));
    eg.g.forward();
    Tensor analytic = eg.g.backward(loss, {eg.table}).at(eg.table);

    auto f = [&](const std::vector<double>& flat) {
        eg.g.bind(eg.table, Tensor(m.encoder.table.shape(), flat));
        eg.g.forward();
        return eg.g.value(loss)[0];
    };
    auto numeric = oracles::finite_diff(f, m.encoder.table.vec());
    CHECK(oracles::max_rel_error(analytic.vec(), numeric) < 1e-4);
}

TEST_CASE("train_denoiser: zero steps returns the initialized model") {
    ModelDims d = tiny_dims();
    Schedule s = make_schedule(20, 1e-3, 0.2);
    ConceptDataset ds = make_concept_dataset(d.concepts, d.d_z, 6.0, 1.0);
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.seed = 4;
    Model trained = train_denoiser(d, s, ds, cfg);
    Model init = init_model(d, s, ds, 4);
    CHECK(trained.denoiser.w1 == init.denoiser.w1);
    CHECK(trained.encoder.table == init.encoder.table);
}

TEST_CASE("train_denoiser improves the held-out objective and is reproducible") {
    ModelDims d = tiny_dims();
    Schedule s = make_schedule(20, 1e-3, 0.2);
    ConceptDataset ds = make_concept_dataset(d.concepts, d.d_z, 6.0, 1.0);
    TrainConfig cfg;
    cfg.steps = 300;
    cfg.batch = 16;
    cfg.lr = 2e-3;
    cfg.seed = 11;

    Model init = init_model(d, s, ds, 11);
    double before = training_loss(init, 64, 999);
    Model trained = train_denoiser(d, s, ds, cfg);
    double after = training_loss(trained, 64, 999);
    CHECK(after < before);

    Model again = train_denoiser(d, s, ds, cfg);
    CHECK(trained.denoiser.w1 == again.denoiser.w1);
    CHECK(trained.denoiser.b3 == again.denoiser.b3);
    CHECK(trained.encoder.table == again.encoder.table);
}

TEST_CASE("train_denoiser divergence guard trips on an absurd learning rate") {
    ModelDims d = tiny_dims();
    Schedule s = make_schedule(20, 1e-3, 0.2);
    ConceptDataset ds = make_concept_dataset(d.concepts, d.d_z, 6.0, 1.0);
    TrainConfig cfg;
    cfg.steps = 400;
    cfg.batch = 4;
    cfg.lr = 50.0;
    cfg.seed = 1;
    CHECK_THROWS_AS(train_denoiser(d, s, ds, cfg), NumericalError);
}

TEST_CASE("sample: determinism and tap counts") {
    Model m = tiny_model(8);
    TokenSequence y = m.canonical_prompt(1);
    SampleOutput a = sample(m, y, 123, true, "baseline");
    SampleOutput b = sample(m, y, 123, true, "baseline");
    CHECK(a.z0 == b.z0);
    CHECK(a.taps.down_tap.size() == m.schedule.timesteps);
    CHECK(a.taps.mid_tap.size() == m.schedule.timesteps);
    CHECK(a.taps.tap("down.tap").size() == m.schedule.timesteps);
    CHECK_THROWS_AS(a.taps.tap("up.tap"), ConfigError);

    SampleOutput c = sample(m, y, 124, false);
    CHECK(c.has_taps == false);
    bool differs = false;
    for (size_t i = 0; i < c.z0.numel(); ++i) differs |= c.z0[i] != a.z0[i];
    CHECK(differs);
}

TEST_CASE("trained tiny model: conditional samples land on the right blob") {
    ModelDims d = tiny_dims();
    Schedule s = make_schedule(30, 1e-3, 0.25);
    ConceptDataset ds = make_concept_dataset(d.concepts, d.d_z, 6.0, 1.0);
    TrainConfig cfg;
    cfg.steps = 1500;
    cfg.batch = 32;
    cfg.lr = 3e-3;
    cfg.seed = 21;
    Model m = train_denoiser(d, s, ds, cfg);

    int hits = 0;
    const int n = 100;
    for (int i = 0; i < n; ++i) {
        SampleOutput out = sample(m, m.canonical_prompt(1), 1000 + i);
        if (ds.bayes_classify(out.z0) == 1) ++hits;
    }
    CHECK(hits >= 90);
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
    Model m = tiny_model(33);
    std::string path = "test_ckpt_roundtrip.bin";
    save_model(path, m);
    Model loaded = load_model(path);
    CHECK(loaded.encoder.table == m.encoder.table);
    CHECK(loaded.denoiser.w2 == m.denoiser.w2);
    CHECK(loaded.schedule.alpha_bar == m.schedule.alpha_bar);
    CHECK(loaded.dims == m.dims);
    CHECK(loaded.empty_conditioning() == m.empty_conditioning());

    // Re-writing the loaded model reproduces identical bytes.
    std::string path2 = "test_ckpt_roundtrip2.bin";
    save_model(path2, loaded);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoint errors") {
    CHECK_THROWS_AS(read_checkpoint("no_such_file.bin"), MissingArtifactError);
    std::string path = "bad_magic.bin";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE1234";
    }
    CHECK_THROWS_AS(read_checkpoint(path), ConfigError);
    std::remove(path.c_str());
}
