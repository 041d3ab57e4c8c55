#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "attack_fixture.hpp"
#include "oracles.hpp"
#include "recordkit/analysis.hpp"
#include "recordkit/errors.hpp"

using namespace recordkit;

TEST_CASE("cosine basics") {
    Tensor x({3}, {1.0, 2.0, -1.0});
    CHECK(cosine(x, x) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor a({2}, {1.0, 0.0});
    Tensor b({2}, {0.0, 1.0});
    CHECK(cosine(a, b) == doctest::Approx(0.0));

    Tensor neg({3}, {-1.0, -2.0, 1.0});
    CHECK(cosine(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));

    Tensor zero({3}, 0.0);
    CHECK_THROWS_AS(cosine(zero, zero), NumericalError);
    CHECK_THROWS_AS(cosine(x, Tensor({2}, 0.5)), ShapeError);
}

TEST_CASE("similarity_report: degenerate and exact cases") {
    Tensor target({4}, {1.0, 0.0, 0.0, 0.0});

    // init == final: the two target histograms coincide.
    EmbeddingRun same{Tensor({4}, {0.5, 0.5, 0.0, 0.0}), Tensor({4}, {0.5, 0.5, 0.0, 0.0})};
    SimilarityReport r1 = similarity_report({same}, target);
    CHECK(r1.hist_init_target == r1.hist_opt_target);
    CHECK(r1.pairs[0].opt_init == doctest::Approx(1.0));

    // init == target: all mass in the bin containing cosine 1.
    EmbeddingRun at_target{target, Tensor({4}, {0.0, 1.0, 0.0, 0.0})};
    SimilarityReport r2 = similarity_report({at_target}, target);
    CHECK(r2.hist_init_target[kSimilarityBins - 1] == 1);

    CHECK_THROWS_AS(similarity_report({}, target), ConfigError);
}

TEST_CASE("similarity_report matches per-pair scalar recomputation on 20 runs") {
    Rng rng(3, "simrep");
    Tensor target({6});
    for (size_t i = 0; i < 6; ++i) target[i] = rng.gaussian();
    std::vector<EmbeddingRun> runs;
    for (int k = 0; k < 20; ++k) {
        EmbeddingRun run{Tensor({6}), Tensor({6})};
        for (size_t i = 0; i < 6; ++i) {
            run.init[i] = rng.gaussian();
            run.final[i] = rng.gaussian();
        }
        runs.push_back(std::move(run));
    }
    SimilarityReport report = similarity_report(runs, target);
    REQUIRE(report.pairs.size() == 20);

    auto plain_cos = [](const Tensor& a, const Tensor& b) {
        double num = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = 0; i < a.numel(); ++i) {
            num += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return num / (std::sqrt(na) * std::sqrt(nb));
    };
    size_t total = 0;
    for (size_t b = 0; b < kSimilarityBins; ++b) total += report.hist_init_target[b];
    CHECK(total == 20);
    for (size_t k = 0; k < 20; ++k) {
        CHECK(std::fabs(report.pairs[k].init_target - plain_cos(runs[k].init, target)) < 1e-10);
        CHECK(std::fabs(report.pairs[k].opt_target - plain_cos(runs[k].final, target)) < 1e-10);
        CHECK(std::fabs(report.pairs[k].opt_init - plain_cos(runs[k].final, runs[k].init)) <
              1e-10);
        CHECK(report.pairs[k].init_target >= -1.0 - 1e-12);
        CHECK(report.pairs[k].init_target <= 1.0 + 1e-12);
    }
}

TEST_CASE("trajectory_distance: identities and errors") {
    Model m = fixture::attack_baseline(5);
    TokenSequence y = m.canonical_prompt(1);
    SampleOutput a = sample(m, y, 7, true, "a");
    SampleOutput b = sample(m, y, 8, true, "b");

    auto self_dist = trajectory_distance(a.taps, a.taps, "mid.tap");
    for (double v : self_dist) CHECK(v == 0.0);

    auto dab = trajectory_distance(a.taps, b.taps, "mid.tap");
    auto dba = trajectory_distance(b.taps, a.taps, "mid.tap");
    CHECK(dab == dba);
    bool any_positive = false;
    for (double v : dab) any_positive |= v > 0.0;
    CHECK(any_positive);

    // Scalar recomputation oracle.
    for (size_t t = 0; t < dab.size(); ++t) {
        double acc = 0.0;
        for (size_t i = 0; i < a.taps.mid_tap[t].numel(); ++i) {
            double diff = a.taps.mid_tap[t][i] - b.taps.mid_tap[t][i];
            acc += diff * diff;
        }
        CHECK(std::fabs(dab[t] - std::sqrt(acc)) < 1e-10);
    }

    TrajectoryRecord short_rec = a.taps;
    short_rec.mid_tap.pop_back();
    CHECK_THROWS_AS(trajectory_distance(a.taps, short_rec, "mid.tap"), ShapeError);
    CHECK_THROWS_AS(trajectory_distance(a.taps, b.taps, "nope"), ConfigError);
}

TEST_CASE("pca_project: collinear points flatten to one axis") {
    std::vector<Tensor> pts;
    for (int i = 0; i < 5; ++i) {
        pts.push_back(Tensor({3}, {1.0 * i, 2.0 * i, -1.0 * i}));
    }
    PcaResult res = pca_project(pts);
    CHECK(res.degenerate == true);
    CHECK(res.components == 1);
    for (const auto& c : res.coords) CHECK(std::fabs(c[1]) < 1e-10);

    CHECK_THROWS_AS(pca_project({pts[0], pts[1]}), ConfigError);
}

TEST_CASE("pca_project preserves distances of a planar dataset in high dims") {
    // Plant a 2-D configuration into 7 dims with an orthonormal pair.
    Rng rng(9, "pca");
    std::vector<std::array<double, 2>> plane;
    for (int i = 0; i < 12; ++i) {
        plane.push_back({rng.gaussian() * 2.0, rng.gaussian()});
    }
    // Orthonormal directions u, v.
    std::vector<double> u(7), v(7);
    for (int i = 0; i < 7; ++i) {
        u[i] = rng.gaussian();
        v[i] = rng.gaussian();
    }
    double nu = 0.0;
    for (double x : u) nu += x * x;
    for (auto& x : u) x /= std::sqrt(nu);
    double uv = 0.0;
    for (int i = 0; i < 7; ++i) uv += u[i] * v[i];
    for (int i = 0; i < 7; ++i) v[i] -= uv * u[i];
    double nv = 0.0;
    for (double x : v) nv += x * x;
    for (auto& x : v) x /= std::sqrt(nv);

    std::vector<Tensor> pts;
    for (const auto& p : plane) {
        Tensor t({7});
        for (int i = 0; i < 7; ++i) t[i] = p[0] * u[i] + p[1] * v[i] + 3.0;
        pts.push_back(std::move(t));
    }
    PcaResult res = pca_project(pts);
    CHECK(res.components == 2);
    double worst = 0.0;
    for (size_t a = 0; a < pts.size(); ++a) {
        for (size_t b = a + 1; b < pts.size(); ++b) {
            double da = std::hypot(plane[a][0] - plane[b][0], plane[a][1] - plane[b][1]);
            double db = std::hypot(res.coords[a][0] - res.coords[b][0],
                                   res.coords[a][1] - res.coords[b][1]);
            worst = std::max(worst, std::fabs(da - db));
        }
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("pca_project reconstruction error matches the full-decomposition oracle") {
    Rng rng(31, "pca.full");
    const size_t n = 10, d = 6;
    std::vector<Tensor> pts;
    for (size_t i = 0; i < n; ++i) {
        Tensor t({d});
        for (size_t j = 0; j < d; ++j) t[j] = rng.gaussian() * (1.0 + 0.3 * j);
        pts.push_back(std::move(t));
    }
    PcaResult res = pca_project(pts);

    // Reconstruction error from the projection itself.
    std::vector<double> mean(d, 0.0);
    for (const Tensor& p : pts) {
        for (size_t j = 0; j < d; ++j) mean[j] += p[j] / n;
    }
    double total_var = 0.0;
    for (const Tensor& p : pts) {
        for (size_t j = 0; j < d; ++j) {
            double c = p[j] - mean[j];
            total_var += c * c;
        }
    }
    double projected = 0.0;
    for (const auto& c : res.coords) projected += c[0] * c[0] + c[1] * c[1];
    double reconstruction_error = total_var - projected;

    // Oracle: full Jacobi spectrum of the scatter matrix, discard the top 2.
    std::vector<std::vector<double>> scatter(d, std::vector<double>(d, 0.0));
    for (const Tensor& p : pts) {
        for (size_t a = 0; a < d; ++a) {
            for (size_t b = 0; b < d; ++b) {
                scatter[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    auto evals = oracles::jacobi_eigenvalues(scatter);
    double discarded = 0.0;
    for (size_t k = 2; k < d; ++k) discarded += evals[k];
    CHECK(reconstruction_error == doctest::Approx(discarded).epsilon(1e-8));

    // The implementation's spectrum agrees with the oracle's.
    for (size_t k = 0; k < d; ++k) {
        CHECK(res.eigenvalues[k] == doctest::Approx(evals[k]).epsilon(1e-8));
    }
}

TEST_CASE("analysis CSV emitters") {
    Tensor target({4}, {1.0, 0.0, 0.0, 0.0});
    EmbeddingRun run{Tensor({4}, {0.5, 0.5, 0.0, 0.0}), Tensor({4}, {0.9, 0.1, 0.0, 0.0})};
    SimilarityReport report = similarity_report({run}, target);
    write_similarity_csv("sim_hist.csv", report);
    write_similarity_pairs_csv("sim_pairs.csv", report);

    std::ifstream h("sim_hist.csv");
    std::string line;
    std::getline(h, line);
    CHECK(line == "bin,lo,hi,init_target,opt_target,opt_init");
    size_t rows = 0;
    while (std::getline(h, line)) ++rows;
    CHECK(rows == kSimilarityBins);

    write_trajectory_csv("traj.csv", {{"a_vs_b", {1.0, 2.0}}});
    std::ifstream t("traj.csv");
    std::getline(t, line);
    CHECK(line == "label,step,distance");

    std::vector<Tensor> pts = {Tensor({2}, {0.0, 0.0}), Tensor({2}, {1.0, 0.0}),
                               Tensor({2}, {0.0, 1.0})};
    PcaResult pca = pca_project(pts);
    write_pca_csv("pca.csv", {"p0", "p1", "p2"}, pca);
    std::ifstream pc("pca.csv");
    std::getline(pc, line);
    CHECK(line == "label,x,y");

    std::remove("sim_hist.csv");
    std::remove("sim_pairs.csv");
    std::remove("traj.csv");
    std::remove("pca.csv");
}
