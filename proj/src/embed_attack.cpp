#include "recordkit/embed_attack.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "recordkit/checkpoint.hpp"
#include "recordkit/errors.hpp"
#include "recordkit/optimizers.hpp"
#include "recordkit/schedule.hpp"

namespace recordkit {

namespace {

struct EmbedRows {
    Tensor z, temb, target;
    size_t count = 0;
};

EmbedRows rows_for_variant(SampleSet& set, const Model& unlearned, const Model* baseline,
                           const TokenSequence* y_target, EmbedVariant variant) {
    if (set.empty()) throw ConfigError("embed_loss: sample set is empty");
    size_t B = set.size();
    size_t d = unlearned.dims.d_z;
    EmbedRows rows{Tensor({B, d}), Tensor(), Tensor({B, d}), B};
    std::vector<size_t> ts(B);
    if (variant == EmbedVariant::kL2) {
        if (baseline == nullptr || y_target == nullptr) {
            throw ConfigError("embed_loss: L2 variant needs the baseline model and target prompt");
        }
        precompute_targets(set, *baseline, *y_target);
    }
    for (size_t r = 0; r < B; ++r) {
        const SampleItem& item = set.items[r];
        ts[r] = item.t;
        for (size_t i = 0; i < d; ++i) rows.z.at(r, i) = item.z_t[i];
        if (variant == EmbedVariant::kL1) {
            if (!item.has_eps) {
                throw ConfigError("embed_loss: L1 variant needs the stored noise in every item");
            }
            for (size_t i = 0; i < d; ++i) rows.target.at(r, i) = item.eps[i];
        } else {
            for (size_t i = 0; i < d; ++i) rows.target.at(r, i) = set.cached_targets[r][i];
        }
    }
    rows.temb = unlearned.time_embedding_rows(ts);
    return rows;
}

double eval_mean_loss(const Tensor& embed, const EmbedRows& rows, const Model& unlearned) {
    CondLossGraph lg = build_cond_loss_graph(unlearned.dims, embed.rows(), rows.count);
    bind_cond_loss_params(lg, unlearned.encoder, unlearned.denoiser);
    lg.g.bind(lg.z, rows.z);
    lg.g.bind(lg.temb, rows.temb);
    lg.g.bind(lg.target, rows.target);
    lg.g.bind(lg.embed, embed);
    lg.g.forward();
    return lg.g.value(lg.loss_mean)[0];
}

}  // namespace

double embed_loss(const Tensor& embed, SampleSet& set, const Model& unlearned,
                  const Model* baseline, const TokenSequence* y_target, EmbedVariant variant) {
    if (embed.rank() != 2 || embed.cols() != unlearned.dims.d_e) {
        throw ShapeError("embed_loss: embedding must be [len, d_e], got " + embed.shape_str());
    }
    EmbedRows rows = rows_for_variant(set, unlearned, baseline, y_target, variant);
    return eval_mean_loss(embed, rows, unlearned);
}

EmbedAttackRun embed_attack(const Model& unlearned, const Model& baseline,
                            const TokenSequence& y_target, const EmbedAttackConfig& cfg) {
    validate_tokens(y_target, unlearned.dims.vocab, unlearned.dims.max_len);
    if (cfg.batch == 0 || cfg.train_size == 0 || cfg.eval_size == 0) {
        throw ConfigError("embed attack: batch, train_size and eval_size must be positive");
    }
    const ModelDims& dims = unlearned.dims;
    size_t S = y_target.size();

    EmbedAttackRun run;
    run.config = cfg;
    run.seed = cfg.seed;

    // Training latents generated by the baseline with the target prompt.
    std::vector<Tensor> pool;
    pool.reserve(cfg.train_size);
    Rng gen_seeds(cfg.seed, "embed.gen");
    for (size_t i = 0; i < cfg.train_size; ++i) {
        pool.push_back(sample(baseline, y_target, gen_seeds.next_u64()).z0);
    }
    run.eval_set =
        sample_set_from_latents(unlearned, pool, cfg.eval_size, cfg.seed, "embed.eval");

    Tensor embed({S, dims.d_e});
    Rng init_rng(cfg.seed, "embed.init");
    if (cfg.init == EmbedInit::kRandomNormal) {
        for (size_t i = 0; i < embed.numel(); ++i) embed[i] = init_rng.gaussian();
    } else {
        embed = unlearned.prompt_embedding(y_target);
        for (size_t i = 0; i < embed.numel(); ++i) embed[i] += 0.1 * init_rng.gaussian();
    }
    run.initial = embed;

    const Model* base_ptr = &baseline;
    const TokenSequence* target_ptr = &y_target;
    auto eval_trace = [&]() {
        return embed_loss(embed, run.eval_set, unlearned, base_ptr, target_ptr, cfg.variant);
    };
    run.loss_trace.push_back(eval_trace());
    run.best = embed;
    run.best_epoch = 0;
    double best_loss = run.loss_trace[0];
    run.snapshots.push_back({0, embed});

    // One reusable loss graph per distinct chunk size.
    std::map<size_t, CondLossGraph> graphs;
    auto graph_for = [&](size_t B) -> CondLossGraph& {
        auto it = graphs.find(B);
        if (it == graphs.end()) {
            it = graphs.emplace(B, build_cond_loss_graph(dims, S, B)).first;
            bind_cond_loss_params(it->second, unlearned.encoder, unlearned.denoiser);
        }
        return it->second;
    };
    Tensor c_target = baseline.encode_text(y_target);
    std::map<size_t, DenoiserEval> base_evals;
    auto base_eval_for = [&](size_t B) -> DenoiserEval& {
        auto it = base_evals.find(B);
        if (it == base_evals.end()) it = base_evals.emplace(B, DenoiserEval(baseline, B)).first;
        return it->second;
    };

    NAdam opt({&embed}, cfg.lr);
    double initial_step_loss = -1.0;
    int bad_streak = 0;
    uint64_t step_counter = 0;

    for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle(cfg.seed, "embed.shuffle", epoch);
        std::vector<size_t> order = shuffle.permutation(cfg.train_size);
        for (size_t start = 0; start < cfg.train_size; start += cfg.batch) {
            size_t B = std::min(cfg.batch, cfg.train_size - start);
            Rng noise(cfg.seed, "embed.noise", step_counter++);
            Tensor z({B, dims.d_z});
            Tensor target({B, dims.d_z});
            std::vector<size_t> ts(B);
            for (size_t r = 0; r < B; ++r) {
                const Tensor& z0 = pool[order[start + r]];
                ts[r] = noise.uniform_int(unlearned.schedule.timesteps);
                double a = std::sqrt(unlearned.schedule.alpha_bar[ts[r]]);
                double b = std::sqrt(1.0 - unlearned.schedule.alpha_bar[ts[r]]);
                for (size_t i = 0; i < dims.d_z; ++i) {
                    double eps = noise.gaussian();
                    z.at(r, i) = a * z0[i] + b * eps;
                    if (cfg.variant == EmbedVariant::kL1) target.at(r, i) = eps;
                }
            }
            Tensor temb = unlearned.time_embedding_rows(ts);
            if (cfg.variant == EmbedVariant::kL2) {
                Tensor cond({B, dims.d_e});
                for (size_t r = 0; r < B; ++r) {
                    for (size_t i = 0; i < dims.d_e; ++i) cond.at(r, i) = c_target[i];
                }
                target = base_eval_for(B).eval(z, ts, cond);
            }

            CondLossGraph& lg = graph_for(B);
            lg.g.bind(lg.z, z);
            lg.g.bind(lg.temb, temb);
            lg.g.bind(lg.target, target);
            lg.g.bind(lg.embed, embed);
            lg.g.forward();
            double step_loss = lg.g.value(lg.loss_mean)[0];
            if (initial_step_loss < 0.0) initial_step_loss = step_loss;
            if (step_loss > 10.0 * initial_step_loss) {
                if (++bad_streak >= 100) {
                    throw NumericalError("embedding attack diverged: loss " +
                                         std::to_string(step_loss) +
                                         " exceeded 10x initial for 100 consecutive steps");
                }
            } else {
                bad_streak = 0;
            }
            Tensor grad = lg.g.backward(lg.loss_mean, {lg.embed}).at(lg.embed);
            opt.step({grad});
        }

        double epoch_loss = eval_trace();
        run.loss_trace.push_back(epoch_loss);
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            run.best = embed;
            run.best_epoch = epoch;
        }
        bool at_interval = cfg.snapshot_interval > 0 && epoch % cfg.snapshot_interval == 0;
        if (at_interval || epoch == cfg.epochs) run.snapshots.push_back({epoch, embed});
    }
    return run;
}

const std::vector<EmbedSnapshot>& trajectory_log(const EmbedAttackRun& run) {
    return run.snapshots;
}

std::string embed_run_to_json(const EmbedAttackRun& run, const std::string& snapshots_path) {
    nlohmann::ordered_json j;
    j["variant"] = run.config.variant == EmbedVariant::kL1 ? "L1" : "L2";
    j["loss_trace"] = run.loss_trace;
    j["best_epoch"] = run.best_epoch;
    j["seed"] = run.seed;
    j["config"] = {{"epochs", run.config.epochs},
                   {"lr", run.config.lr},
                   {"batch", run.config.batch},
                   {"train_size", run.config.train_size},
                   {"eval_size", run.config.eval_size},
                   {"init", run.config.init == EmbedInit::kRandomNormal ? "random-normal"
                                                                        : "near-target"},
                   {"snapshot_interval", run.config.snapshot_interval},
                   {"seed", run.config.seed}};
    j["snapshots_path"] = snapshots_path;
    return j.dump(2) + "\n";
}

void write_embed_run(const std::string& json_path, const std::string& snapshots_path,
                     const EmbedAttackRun& run, const std::string& snapshots_name) {
    NamedTensors tensors;
    for (const EmbedSnapshot& snap : run.snapshots) {
        tensors.emplace_back("snapshot." + std::to_string(snap.epoch), snap.embed);
    }
    write_checkpoint(snapshots_path, tensors);
    std::ofstream os(json_path, std::ios::trunc | std::ios::binary);
    if (!os) throw MissingArtifactError("cannot open for writing: " + json_path);
    os << embed_run_to_json(run, snapshots_name.empty() ? snapshots_path : snapshots_name);
}

std::vector<EmbedSnapshot> read_embed_snapshots(const std::string& snapshots_path) {
    NamedTensors tensors = read_checkpoint(snapshots_path);
    std::vector<EmbedSnapshot> out;
    for (auto& [name, t] : tensors) {
        if (name.rfind("snapshot.", 0) != 0) continue;
        out.push_back({static_cast<size_t>(std::stoull(name.substr(9))), std::move(t)});
    }
    return out;
}

}  // namespace recordkit
