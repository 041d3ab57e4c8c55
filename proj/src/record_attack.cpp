#include "recordkit/record_attack.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "recordkit/errors.hpp"

namespace recordkit {

namespace {

using ordered_json = nlohmann::ordered_json;

struct SetRows {
    Tensor z, temb, target;
    size_t count = 0;
};

SetRows assemble_rows(SampleSet& set, const Model& unlearned, const Model& baseline,
                      const TokenSequence& y_target) {
    if (set.empty()) throw ConfigError("loss_hat: sample set is empty");
    precompute_targets(set, baseline, y_target);
    size_t B = set.size();
    size_t d = unlearned.dims.d_z;
    SetRows rows{Tensor({B, d}), Tensor(), Tensor({B, d}), B};
    std::vector<size_t> ts(B);
    for (size_t r = 0; r < B; ++r) {
        const SampleItem& item = set.items[r];
        ts[r] = item.t;
        for (size_t i = 0; i < d; ++i) {
            rows.z.at(r, i) = item.z_t[i];
            rows.target.at(r, i) = set.cached_targets[r][i];
        }
    }
    rows.temb = unlearned.time_embedding_rows(ts);
    return rows;
}

// Reusable loss evaluation: graph built and parameters bound once, only
// the prompt embedding and batch rows rebind between calls.
class LossEval {
public:
    LossEval(const Model& unlearned, size_t length, size_t batch)
        : lg_(build_cond_loss_graph(unlearned.dims, length, batch)) {
        bind_cond_loss_params(lg_, unlearned.encoder, unlearned.denoiser);
    }

    void bind_rows(const SetRows& rows) {
        lg_.g.bind(lg_.z, rows.z);
        lg_.g.bind(lg_.temb, rows.temb);
        lg_.g.bind(lg_.target, rows.target);
    }

    double loss_sum(const Tensor& embed) {
        lg_.g.bind(lg_.embed, embed);
        lg_.g.forward();
        return lg_.g.value(lg_.loss_sum)[0];
    }

    Tensor grad_embed(const Tensor& embed) {
        lg_.g.bind(lg_.embed, embed);
        lg_.g.forward();
        return lg_.g.backward(lg_.loss_sum, {lg_.embed}).at(lg_.embed);
    }

private:
    CondLossGraph lg_;
};

void substitute_row(Tensor& embed, size_t position, const Tensor& table, int token) {
    for (size_t c = 0; c < embed.cols(); ++c) {
        embed.at(position, c) = table.at(static_cast<size_t>(token), c);
    }
}

void validate_attack_config(const AttackConfig& cfg, const ModelDims& dims) {
    if (cfg.length == 0 || cfg.length > dims.max_len) {
        throw ConfigError("attack: length must be in [1, " + std::to_string(dims.max_len) + "]");
    }
    if (cfg.grad_samples == 0 || cfg.grad_samples > dims.vocab) {
        throw ConfigError("attack: grad_samples must be in [1, vocab]");
    }
    if (cfg.candidates == 0 || cfg.candidates > dims.vocab) {
        throw ConfigError("attack: candidates must be in [1, vocab]");
    }
    if (cfg.reference_size == 0) throw ConfigError("attack: reference_size must be positive");
    if (cfg.batch == 0 && !cfg.use_reference_as_batch) {
        throw ConfigError("attack: batch must be positive");
    }
}

}  // namespace

size_t target_concept(const TokenSequence& y_target, const ModelDims& dims) {
    for (int id : y_target.ids) {
        if (id >= 1 && static_cast<size_t>(id) <= dims.concepts) return static_cast<size_t>(id);
    }
    throw ConfigError("target prompt names no concept token");
}

double loss_hat(const TokenSequence& y, SampleSet& batch, const Model& unlearned,
                const Model& baseline, const TokenSequence& y_target) {
    validate_tokens(y, unlearned.dims.vocab, unlearned.dims.max_len);
    SetRows rows = assemble_rows(batch, unlearned, baseline, y_target);
    LossEval eval(unlearned, y.size(), rows.count);
    eval.bind_rows(rows);
    return eval.loss_sum(unlearned.prompt_embedding(y));
}

std::vector<double> token_scores(const Tensor& table, const Tensor& gbar) {
    if (table.rank() != 2 || gbar.numel() != table.cols()) {
        throw ShapeError("token_scores: gradient width " + gbar.shape_str() +
                         " does not match table " + table.shape_str());
    }
    std::vector<double> scores(table.rows());
    for (size_t v = 0; v < table.rows(); ++v) {
        double acc = 0.0;
        for (size_t c = 0; c < table.cols(); ++c) acc += table.at(v, c) * gbar[c];
        scores[v] = acc;
    }
    return scores;
}

std::vector<int> top_k_ids(const std::vector<double>& scores, size_t k) {
    if (k == 0 || k > scores.size()) throw ConfigError("top_k_ids: k out of range");
    std::vector<int> ids(scores.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });
    ids.resize(k);
    return ids;
}

Tensor candidate_gradient(size_t position, const TokenSequence& y, SampleSet& batch,
                          size_t grad_samples, const Model& unlearned, const Model& baseline,
                          const TokenSequence& y_target, Rng& rng) {
    if (position >= y.size()) throw ConfigError("candidate_gradient: position out of range");
    if (grad_samples == 0 || grad_samples > unlearned.dims.vocab) {
        throw ConfigError("candidate_gradient: grad_samples must be in [1, vocab]");
    }
    SetRows rows = assemble_rows(batch, unlearned, baseline, y_target);
    LossEval eval(unlearned, y.size(), rows.count);
    eval.bind_rows(rows);

    std::vector<int> tokens =
        rng.sample_distinct(static_cast<int>(unlearned.dims.vocab), static_cast<int>(grad_samples));
    Tensor embed = unlearned.prompt_embedding(y);
    Tensor sum({unlearned.dims.d_e}, 0.0);
    for (int token : tokens) {
        substitute_row(embed, position, unlearned.encoder.table, token);
        Tensor grad = eval.grad_embed(embed);
        for (size_t c = 0; c < sum.numel(); ++c) sum[c] += grad.at(position, c);
    }
    for (size_t c = 0; c < sum.numel(); ++c) sum[c] /= static_cast<double>(grad_samples);
    return sum;
}

std::vector<int> candidate_select(size_t position, const TokenSequence& y, SampleSet& batch,
                                  size_t grad_samples, size_t candidates, const Model& unlearned,
                                  const Model& baseline, const TokenSequence& y_target, Rng& rng) {
    Tensor gbar =
        candidate_gradient(position, y, batch, grad_samples, unlearned, baseline, y_target, rng);
    return top_k_ids(token_scores(unlearned.encoder.table, gbar), candidates);
}

TryUpdateResult try_update(const TokenSequence& y, size_t position,
                           const std::vector<int>& candidates, SampleSet& batch,
                           SampleSet& reference, const Model& unlearned, const Model& baseline,
                           const TokenSequence& y_target) {
    if (candidates.empty()) throw ConfigError("try_update: candidate list is empty");
    if (position >= y.size()) throw ConfigError("try_update: position out of range");

    SetRows batch_rows = assemble_rows(batch, unlearned, baseline, y_target);
    LossEval batch_eval(unlearned, y.size(), batch_rows.count);
    batch_eval.bind_rows(batch_rows);

    Tensor embed = unlearned.prompt_embedding(y);
    int best_token = 0;
    double best_loss = 0.0;
    bool first = true;
    for (int token : candidates) {
        substitute_row(embed, position, unlearned.encoder.table, token);
        double loss = batch_eval.loss_sum(embed);
        if (first || loss < best_loss || (loss == best_loss && token < best_token)) {
            best_token = token;
            best_loss = loss;
            first = false;
        }
    }

    SetRows ref_rows = assemble_rows(reference, unlearned, baseline, y_target);
    LossEval ref_eval(unlearned, y.size(), ref_rows.count);
    ref_eval.bind_rows(ref_rows);

    TryUpdateResult result;
    result.ref_loss_before = ref_eval.loss_sum(unlearned.prompt_embedding(y));
    substitute_row(embed, position, unlearned.encoder.table, best_token);
    result.ref_loss_after = ref_eval.loss_sum(embed);
    result.best_candidate = best_token;
    result.seq = y;
    if (result.ref_loss_after < result.ref_loss_before) {
        result.seq.ids[position] = best_token;
        result.accepted = true;
    } else {
        result.ref_loss_after = result.ref_loss_before;
    }
    return result;
}

AttackResult record_attack(const Model& unlearned, const Model& baseline,
                           const TokenSequence& y_target, const AttackConfig& cfg) {
    validate_tokens(y_target, unlearned.dims.vocab, unlearned.dims.max_len);
    validate_attack_config(cfg, unlearned.dims);
    size_t concept_id = target_concept(y_target, unlearned.dims);

    AttackResult result;
    result.seed = cfg.seed;
    result.config = cfg;

    Rng init_rng(cfg.seed, "attack.init");
    result.initial.ids.resize(cfg.length);
    for (size_t s = 0; s < cfg.length; ++s) {
        result.initial.ids[s] = static_cast<int>(init_rng.uniform_int(unlearned.dims.vocab));
    }
    TokenSequence y = result.initial;

    SampleSet reference = sample_set_from_concept(unlearned, concept_id, cfg.reference_size,
                                                  cfg.seed, "attack.ref");
    SetRows ref_rows = assemble_rows(reference, unlearned, baseline, y_target);
    LossEval ref_eval(unlearned, cfg.length, ref_rows.count);
    ref_eval.bind_rows(ref_rows);

    size_t batch_count = cfg.use_reference_as_batch ? cfg.reference_size : cfg.batch;
    LossEval batch_eval(unlearned, cfg.length, batch_count);
    if (cfg.use_reference_as_batch) batch_eval.bind_rows(ref_rows);

    double current_ref_loss = ref_eval.loss_sum(unlearned.prompt_embedding(y));
    size_t visit = 0;
    size_t accepted_in_last_pass = 0;
    for (size_t pass = 0; pass < cfg.passes; ++pass) {
        Rng perm_rng(cfg.seed, "attack.perm", pass);
        std::vector<size_t> order = perm_rng.permutation(cfg.length);
        accepted_in_last_pass = 0;
        for (size_t position : order) {
            SampleSet fresh;
            if (!cfg.use_reference_as_batch) {
                fresh = sample_set_from_concept(unlearned, concept_id, cfg.batch, cfg.seed,
                                                "attack.batch", visit);
                batch_eval.bind_rows(assemble_rows(fresh, unlearned, baseline, y_target));
            }

            // Candidate selection via the averaged embedding gradient.
            Rng token_rng(cfg.seed, "attack.tokens", visit);
            std::vector<int> sampled = token_rng.sample_distinct(
                static_cast<int>(unlearned.dims.vocab), static_cast<int>(cfg.grad_samples));
            Tensor embed = unlearned.prompt_embedding(y);
            Tensor gbar({unlearned.dims.d_e}, 0.0);
            for (int token : sampled) {
                substitute_row(embed, position, unlearned.encoder.table, token);
                Tensor grad = batch_eval.grad_embed(embed);
                for (size_t c = 0; c < gbar.numel(); ++c) gbar[c] += grad.at(position, c);
            }
            for (size_t c = 0; c < gbar.numel(); ++c) {
                gbar[c] /= static_cast<double>(cfg.grad_samples);
            }
            std::vector<int> cands =
                top_k_ids(token_scores(unlearned.encoder.table, gbar), cfg.candidates);

            // Exact evaluation of the candidates on the sampled batch.
            int best_token = 0;
            double best_loss = 0.0;
            bool first = true;
            for (int token : cands) {
                substitute_row(embed, position, unlearned.encoder.table, token);
                double loss = batch_eval.loss_sum(embed);
                if (first || loss < best_loss || (loss == best_loss && token < best_token)) {
                    best_token = token;
                    best_loss = loss;
                    first = false;
                }
            }

            // Greedy acceptance on the fixed reference set.
            substitute_row(embed, position, unlearned.encoder.table, best_token);
            double candidate_ref_loss = ref_eval.loss_sum(embed);
            if (candidate_ref_loss < current_ref_loss) {
                result.updates.push_back({pass, position, y.ids[position], best_token,
                                          candidate_ref_loss - current_ref_loss});
                y.ids[position] = best_token;
                current_ref_loss = candidate_ref_loss;
                ++accepted_in_last_pass;
            }
            result.loss_trace.push_back(current_ref_loss);
            ++visit;
        }
    }
    result.prompt = y;
    result.converged = cfg.passes > 0 && accepted_in_last_pass == 0;
    return result;
}

std::string attack_result_to_json(const AttackResult& result) {
    ordered_json j;
    j["prompt"] = result.prompt.ids;
    j["loss_trace"] = result.loss_trace;
    j["updates"] = ordered_json::array();
    for (const AttackUpdate& u : result.updates) {
        j["updates"].push_back({{"pass", u.pass},
                                {"position", u.position},
                                {"old", u.old_token},
                                {"new", u.new_token},
                                {"delta", u.delta}});
    }
    j["seed"] = result.seed;
    j["config"] = {{"passes", result.config.passes},
                   {"grad_samples", result.config.grad_samples},
                   {"candidates", result.config.candidates},
                   {"length", result.config.length},
                   {"batch", result.config.batch},
                   {"reference_size", result.config.reference_size},
                   {"use_reference_as_batch", result.config.use_reference_as_batch},
                   {"seed", result.config.seed}};
    return j.dump(2) + "\n";
}

AttackResult attack_result_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    AttackResult r;
    r.prompt.ids = j.at("prompt").get<std::vector<int>>();
    r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    for (const auto& u : j.at("updates")) {
        r.updates.push_back({u.at("pass").get<size_t>(), u.at("position").get<size_t>(),
                             u.at("old").get<int>(), u.at("new").get<int>(),
                             u.at("delta").get<double>()});
    }
    r.seed = j.at("seed").get<uint64_t>();
    const auto& c = j.at("config");
    r.config.passes = c.at("passes").get<size_t>();
    r.config.grad_samples = c.at("grad_samples").get<size_t>();
    r.config.candidates = c.at("candidates").get<size_t>();
    r.config.length = c.at("length").get<size_t>();
    r.config.batch = c.at("batch").get<size_t>();
    r.config.reference_size = c.at("reference_size").get<size_t>();
    r.config.use_reference_as_batch = c.at("use_reference_as_batch").get<bool>();
    r.config.seed = c.at("seed").get<uint64_t>();
    // The initial prompt is implied: walk the accepted updates backwards.
    r.initial = r.prompt;
    for (auto it = r.updates.rbegin(); it != r.updates.rend(); ++it) {
        r.initial.ids[it->position] = it->old_token;
    }
    return r;
}

void write_attack_result(const std::string& path, const AttackResult& result) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os << attack_result_to_json(result);
}

AttackResult read_attack_result(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("missing attack result: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return attack_result_from_json(text);
}

}  // namespace recordkit
