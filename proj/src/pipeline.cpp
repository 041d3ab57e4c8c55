#include "recordkit/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "recordkit/analysis.hpp"
#include "recordkit/checkpoint.hpp"
#include "recordkit/errors.hpp"
#include "recordkit/manifest.hpp"

namespace recordkit {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw MissingArtifactError("missing artifact: " + path);
}

RunManifest open_manifest(const PipelinePaths& paths, const ExperimentConfig& cfg) {
    RunManifest manifest;
    if (fs::exists(paths.manifest())) manifest = load_manifest(paths.manifest());
    manifest.config_hash = config_hash(cfg);
    return manifest;
}

void finish(RunManifest& manifest, const PipelinePaths& paths,
            const std::vector<std::string>& written) {
    for (const std::string& p : written) record_artifact(manifest, paths.out, p);
    save_manifest(paths.manifest(), manifest);
}

Model build_and_train(const ExperimentConfig& cfg) {
    Schedule schedule =
        make_schedule(cfg.schedule.timesteps, cfg.schedule.beta_min, cfg.schedule.beta_max);
    ConceptDataset dataset = make_concept_dataset(cfg.model.concepts, cfg.model.d_z,
                                                  cfg.dataset.separation, cfg.dataset.sigma);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.master_seed;
    return train_denoiser(cfg.model, schedule, dataset, tc);
}

void write_json(const std::string& path, const ordered_json& j) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

// Generated images for one attack prompt, classification-ready.
std::vector<Tensor> generate_images(const Model& theta_prime, const TokenSequence& prompt,
                                    size_t count, uint64_t master, uint64_t instance) {
    Rng seeds(master, "eval.gen", instance);
    std::vector<Tensor> images;
    images.reserve(count);
    for (size_t j = 0; j < count; ++j) {
        images.push_back(sample(theta_prime, prompt, seeds.next_u64()).z0);
    }
    return images;
}

std::vector<Tensor> generate_images_cond(const Model& theta_prime, const Tensor& cond,
                                         size_t count, uint64_t master, uint64_t instance) {
    Rng seeds(master, "eval.gen", instance);
    std::vector<Tensor> images;
    images.reserve(count);
    for (size_t j = 0; j < count; ++j) {
        images.push_back(sample_with_conditioning(theta_prime, cond, seeds.next_u64()).z0);
    }
    return images;
}

TokenSequence pad_to_max(const TokenSequence& prompt, size_t max_len) {
    TokenSequence padded = prompt;
    padded.ids.resize(max_len, kPadToken);
    return padded;
}

double mean_of(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t instance) {
    Rng rng(master, tag, instance);
    return rng.next_u64();
}

std::vector<std::string> cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    PipelinePaths paths{out_dir};
    fs::create_directories(out_dir);
    Model model = build_and_train(cfg);
    save_model(paths.baseline(), model);
    RunManifest manifest = open_manifest(paths, cfg);
    std::vector<std::string> written = {paths.baseline()};
    finish(manifest, paths, written);
    return written;
}

std::vector<std::string> cmd_erase(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    PipelinePaths paths{out_dir};
    require_file(paths.baseline());
    Model theta = load_model(paths.baseline());
    ErasureConfig ec = cfg.erasure;
    ec.seed = cfg.master_seed;
    Model theta_prime = erase_concept(theta, ec);
    save_model(paths.erased(), theta_prime);
    RunManifest manifest = open_manifest(paths, cfg);
    std::vector<std::string> written = {paths.erased()};
    finish(manifest, paths, written);
    return written;
}

std::vector<std::string> cmd_attack(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    PipelinePaths paths{out_dir};
    require_file(paths.baseline());
    require_file(paths.erased());
    Model theta = load_model(paths.baseline());
    Model theta_prime = load_model(paths.erased());
    TokenSequence y_target = theta.canonical_prompt(cfg.erasure.concept_id);

    std::vector<std::string> written;
    for (size_t i = 0; i < cfg.attack.seeds; ++i) {
        if (cfg.attack.kind == "record") {
            AttackConfig ac = cfg.attack.record;
            ac.seed = derive_seed(cfg.master_seed, "attack.instance", i);
            AttackResult result = record_attack(theta_prime, theta, y_target, ac);
            std::string path = paths.attack_result("record", i);
            write_attack_result(path, result);
            written.push_back(path);
        } else {
            EmbedAttackConfig ec = cfg.attack.embed;
            ec.seed = derive_seed(cfg.master_seed, "embed.instance", i);
            EmbedAttackRun run = embed_attack(theta_prime, theta, y_target, ec);
            std::string jpath = paths.attack_result("embed", i);
            std::string spath = paths.embed_snapshots(i);
            write_embed_run(jpath, spath, run, fs::path(spath).filename().string());
            written.push_back(jpath);
            written.push_back(spath);
        }
    }
    RunManifest manifest = open_manifest(paths, cfg);
    finish(manifest, paths, written);
    return written;
}

std::vector<std::string> cmd_evaluate(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    PipelinePaths paths{out_dir};
    require_file(paths.baseline());
    require_file(paths.erased());
    for (size_t i = 0; i < cfg.attack.seeds; ++i) {
        require_file(paths.attack_result(cfg.attack.kind, i));
        if (cfg.attack.kind == "embed") require_file(paths.embed_snapshots(i));
    }

    Model theta = load_model(paths.baseline());
    Model theta_prime = load_model(paths.erased());
    ClassSet classes = default_class_set(theta);
    ClassifierConfig ccfg = cfg.classifier;
    ccfg.seed = derive_seed(cfg.master_seed, "classify");
    size_t target_class = cfg.erasure.concept_id - 1;

    double no_attack = no_attack_baseline(theta_prime, theta, cfg.erasure.concept_id,
                                          cfg.eval_images,
                                          derive_seed(cfg.master_seed, "noattack"), ccfg);

    std::vector<Tensor> pool;
    std::vector<double> per_prompt;
    ordered_json prompts = ordered_json::array();
    for (size_t i = 0; i < cfg.attack.seeds; ++i) {
        std::vector<Tensor> images;
        if (cfg.attack.kind == "record") {
            AttackResult result = read_attack_result(paths.attack_result("record", i));
            images = generate_images(theta_prime, result.prompt, cfg.attack.images_per_prompt,
                                     cfg.master_seed, i);
            prompts.push_back(result.prompt.ids);
        } else {
            auto snaps = read_embed_snapshots(paths.embed_snapshots(i));
            if (snaps.empty()) throw MissingArtifactError("no snapshots in " +
                                                          paths.embed_snapshots(i));
            Tensor cond = theta_prime.encode_embedding(snaps.back().embed);
            images = generate_images_cond(theta_prime, cond, cfg.attack.images_per_prompt,
                                          cfg.master_seed, i);
            prompts.push_back("embed:" + std::to_string(snaps.back().epoch));
        }
        per_prompt.push_back(asr(images, target_class, theta, classes, ccfg));
        for (Tensor& t : images) pool.push_back(std::move(t));
    }

    auto rows = evaluate_images(pool, target_class, theta, classes, ccfg);
    write_results_csv(paths.evaluation_csv(), rows);
    double attack_rate = 0.0;
    for (const EvalRow& row : rows) attack_rate += row.is_target ? 1.0 : 0.0;
    attack_rate /= rows.empty() ? 1.0 : static_cast<double>(rows.size());

    ordered_json summary;
    summary["no_attack_asr"] = no_attack;
    summary["attack_asr"] = attack_rate;
    summary["per_prompt_asr"] = per_prompt;
    summary["prompts"] = prompts;
    summary["images_per_prompt"] = cfg.attack.images_per_prompt;
    summary["eval_images"] = cfg.eval_images;
    summary["target_class"] = target_class;
    write_json(paths.eval_summary(), summary);

    RunManifest manifest = open_manifest(paths, cfg);
    std::vector<std::string> written = {paths.evaluation_csv(), paths.eval_summary()};
    finish(manifest, paths, written);
    return written;
}

std::vector<std::string> cmd_analyze(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    PipelinePaths paths{out_dir};
    require_file(paths.baseline());
    require_file(paths.erased());
    for (size_t i = 0; i < cfg.attack.seeds; ++i) {
        require_file(paths.attack_result(cfg.attack.kind, i));
        if (cfg.attack.kind == "embed") require_file(paths.embed_snapshots(i));
    }

    Model theta = load_model(paths.baseline());
    Model theta_prime = load_model(paths.erased());
    TokenSequence y_target = theta.canonical_prompt(cfg.erasure.concept_id);
    Tensor target_embed = theta_prime.prompt_embedding(y_target);

    // Endpoint embeddings per run; shorter prompts are pad-extended so all
    // runs live in the same [max_len, d_e] space.
    std::vector<EmbeddingRun> runs;
    std::vector<TokenSequence> adv_prompts;  // record attacks only
    std::vector<Tensor> adv_conds;           // embed attacks only
    for (size_t i = 0; i < cfg.attack.seeds; ++i) {
        if (cfg.attack.kind == "record") {
            AttackResult result = read_attack_result(paths.attack_result("record", i));
            TokenSequence init = pad_to_max(result.initial, theta.dims.max_len);
            TokenSequence fin = pad_to_max(result.prompt, theta.dims.max_len);
            runs.push_back(
                {theta_prime.prompt_embedding(init), theta_prime.prompt_embedding(fin)});
            adv_prompts.push_back(result.prompt);
        } else {
            auto snaps = read_embed_snapshots(paths.embed_snapshots(i));
            if (snaps.empty()) throw MissingArtifactError("no snapshots in " +
                                                          paths.embed_snapshots(i));
            runs.push_back({snaps.front().embed, snaps.back().embed});
            adv_conds.push_back(theta_prime.encode_embedding(snaps.back().embed));
        }
    }

    SimilarityReport report = similarity_report(runs, target_embed);
    write_similarity_csv(paths.similarity_hist(), report);
    write_similarity_pairs_csv(paths.similarity_pairs(), report);

    std::vector<Tensor> points = {target_embed};
    std::vector<std::string> labels = {"target"};
    for (size_t i = 0; i < runs.size(); ++i) {
        points.push_back(runs[i].init);
        labels.push_back("init_" + std::to_string(i));
        points.push_back(runs[i].final);
        labels.push_back("final_" + std::to_string(i));
    }
    PcaResult pca = pca_project(points);
    write_pca_csv(paths.pca_csv(), labels, pca);

    // Activation trajectories. Success of an adversarial generation is
    // decided by the zero-shot classifier; up to 20 successful generations
    // enter the comparison against the baseline-with-target trajectory.
    ClassSet classes = default_class_set(theta);
    ClassifierConfig ccfg = cfg.classifier;
    ccfg.seed = derive_seed(cfg.master_seed, "classify");
    size_t target_class = cfg.erasure.concept_id - 1;

    std::map<uint64_t, TrajectoryRecord> base_target_taps;
    std::map<uint64_t, TrajectoryRecord> unl_target_taps;
    auto base_at = [&](uint64_t s) -> TrajectoryRecord& {
        auto it = base_target_taps.find(s);
        if (it == base_target_taps.end()) {
            it = base_target_taps.emplace(s, sample(theta, y_target, s, true, "baseline").taps)
                     .first;
        }
        return it->second;
    };
    auto unl_at = [&](uint64_t s) -> TrajectoryRecord& {
        auto it = unl_target_taps.find(s);
        if (it == unl_target_taps.end()) {
            it = unl_target_taps
                     .emplace(s, sample(theta_prime, y_target, s, true, "unlearned").taps)
                     .first;
        }
        return it->second;
    };

    const size_t wanted = 20;
    std::vector<double> adv_means, unl_means;
    std::vector<std::vector<double>> adv_curves_mid, adv_curves_down;
    size_t attempts_per_run = cfg.attack.images_per_prompt;
    for (size_t i = 0; i < cfg.attack.seeds && adv_means.size() < wanted; ++i) {
        Rng seeds(cfg.master_seed, "analyze.gen", i);
        for (size_t j = 0; j < attempts_per_run && adv_means.size() < wanted; ++j) {
            uint64_t s = seeds.next_u64();
            SampleOutput gen =
                cfg.attack.kind == "record"
                    ? sample(theta_prime, adv_prompts[i], s, true, "adversarial")
                    : sample_with_conditioning(theta_prime, adv_conds[i], s, true, "adversarial");
            size_t cls = classify(gen.z0, theta, classes, ccfg, 1000000 + i * 1000 + j);
            if (cls != target_class) continue;
            auto mid = trajectory_distance(gen.taps, base_at(s), "mid.tap");
            auto down = trajectory_distance(gen.taps, base_at(s), "down.tap");
            auto unl_mid = trajectory_distance(unl_at(s), base_at(s), "mid.tap");
            adv_means.push_back(mean_of(mid));
            unl_means.push_back(mean_of(unl_mid));
            adv_curves_mid.push_back(std::move(mid));
            adv_curves_down.push_back(std::move(down));
        }
    }

    uint64_t s0 = derive_seed(cfg.master_seed, "analyze.seed");
    TrajectoryRecord base0 = base_at(s0);
    TrajectoryRecord unl0 = unl_at(s0);
    size_t unrelated_concept = cfg.erasure.concept_id == 1 ? 2 : 1;
    TrajectoryRecord unrelated =
        sample(theta, theta.canonical_prompt(unrelated_concept), s0, true, "unrelated").taps;
    TrajectoryRecord reseeded = sample(theta, y_target, s0 + 1, true, "reseeded").taps;

    std::vector<std::pair<std::string, std::vector<double>>> curves;
    auto mean_curve = [](const std::vector<std::vector<double>>& cs) {
        std::vector<double> m;
        if (cs.empty()) return m;
        m.assign(cs[0].size(), 0.0);
        for (const auto& c : cs) {
            for (size_t t = 0; t < c.size(); ++t) m[t] += c[t];
        }
        for (double& v : m) v /= static_cast<double>(cs.size());
        return m;
    };
    if (!adv_curves_mid.empty()) {
        curves.emplace_back("adversarial_mean.mid", mean_curve(adv_curves_mid));
        curves.emplace_back("adversarial_mean.down", mean_curve(adv_curves_down));
    }
    curves.emplace_back("unlearned_target.mid", trajectory_distance(unl0, base0, "mid.tap"));
    curves.emplace_back("unlearned_target.down", trajectory_distance(unl0, base0, "down.tap"));
    curves.emplace_back("baseline_unrelated.mid", trajectory_distance(unrelated, base0, "mid.tap"));
    curves.emplace_back("baseline_unrelated.down",
                        trajectory_distance(unrelated, base0, "down.tap"));
    curves.emplace_back("baseline_reseeded.mid", trajectory_distance(reseeded, base0, "mid.tap"));
    curves.emplace_back("baseline_reseeded.down", trajectory_distance(reseeded, base0, "down.tap"));
    write_trajectory_csv(paths.trajectory_csv(), curves);

    double mean_adv = mean_of(adv_means);
    double mean_unl = mean_of(unl_means);
    ordered_json summary;
    summary["successful_trajectories"] = adv_means.size();
    summary["mean_adversarial_distance_mid"] = mean_adv;
    summary["mean_unlearned_target_distance_mid"] = mean_unl;
    summary["margin"] = mean_adv - mean_unl;
    summary["ordering_holds"] = !adv_means.empty() && mean_adv > mean_unl;
    write_json(paths.analysis_summary(), summary);

    RunManifest manifest = open_manifest(paths, cfg);
    std::vector<std::string> written = {paths.similarity_hist(), paths.similarity_pairs(),
                                        paths.pca_csv(), paths.trajectory_csv(),
                                        paths.analysis_summary()};
    finish(manifest, paths, written);
    return written;
}

std::vector<std::string> cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                                   const std::vector<size_t>& lengths) {
    validate_config(cfg);
    if (lengths.empty()) throw ConfigError("sweep: no lengths given");
    PipelinePaths paths{out_dir};
    require_file(paths.baseline());
    require_file(paths.erased());
    Model theta = load_model(paths.baseline());
    Model theta_prime = load_model(paths.erased());
    TokenSequence y_target = theta.canonical_prompt(cfg.erasure.concept_id);
    ClassSet classes = default_class_set(theta);
    ClassifierConfig ccfg = cfg.classifier;
    ccfg.seed = derive_seed(cfg.master_seed, "classify");
    size_t target_class = cfg.erasure.concept_id - 1;

    ordered_json rows = ordered_json::array();
    std::ofstream csv(paths.sweep_csv(), std::ios::trunc);
    if (!csv) throw MissingArtifactError("cannot open for writing: " + paths.sweep_csv());
    csv.precision(17);
    csv << "length,seed_index,attack_seed,asr\n";
    ordered_json means;
    for (size_t length : lengths) {
        if (length == 0 || length > cfg.model.max_len) {
            throw ConfigError("sweep: length " + std::to_string(length) + " exceeds max_len");
        }
        std::vector<double> rates;
        for (size_t i = 0; i < cfg.attack.seeds; ++i) {
            AttackConfig ac = cfg.attack.record;
            ac.length = length;
            ac.seed = derive_seed(cfg.master_seed, "sweep.instance", length * 1000 + i);
            AttackResult result = record_attack(theta_prime, theta, y_target, ac);
            std::vector<Tensor> images =
                generate_images(theta_prime, result.prompt, cfg.attack.images_per_prompt,
                                cfg.master_seed, length * 1000 + i);
            double rate = asr(images, target_class, theta, classes, ccfg);
            rates.push_back(rate);
            csv << length << "," << i << "," << ac.seed << "," << rate << "\n";
            rows.push_back({{"length", length},
                            {"seed_index", i},
                            {"attack_seed", ac.seed},
                            {"asr", rate}});
        }
        means[std::to_string(length)] = mean_of(rates);
    }
    csv.close();
    ordered_json j;
    j["rows"] = rows;
    j["mean_asr_by_length"] = means;
    write_json(paths.sweep_json(), j);

    RunManifest manifest = open_manifest(paths, cfg);
    std::vector<std::string> written = {paths.sweep_csv(), paths.sweep_json()};
    finish(manifest, paths, written);
    return written;
}

}  // namespace recordkit
