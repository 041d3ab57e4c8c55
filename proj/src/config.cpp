#include "recordkit/config.hpp"

#include <fstream>

#include <json.hpp>

#include "recordkit/errors.hpp"
#include "recordkit/sha1.hpp"

namespace recordkit {

namespace {

using ordered_json = nlohmann::ordered_json;

template <typename T>
T field(const ordered_json& j, const std::string& section, const std::string& key) {
    if (!j.contains(key)) {
        throw ConfigError("config: missing field " + section + "." + key);
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: field " + section + "." + key + " has the wrong type");
    }
}

void expect_positive(size_t value, const std::string& name) {
    if (value == 0) throw ConfigError("config: " + name + " must be positive");
}

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) {
    ordered_json j;
    j["master_seed"] = cfg.master_seed;
    j["model"] = {{"d_z", cfg.model.d_z},         {"d_e", cfg.model.d_e},
                  {"d_t", cfg.model.d_t},         {"hidden", cfg.model.hidden},
                  {"vocab", cfg.model.vocab},     {"concepts", cfg.model.concepts},
                  {"max_len", cfg.model.max_len}};
    j["schedule"] = {{"timesteps", cfg.schedule.timesteps},
                     {"beta_min", cfg.schedule.beta_min},
                     {"beta_max", cfg.schedule.beta_max}};
    j["dataset"] = {{"separation", cfg.dataset.separation}, {"sigma", cfg.dataset.sigma}};
    j["train"] = {{"steps", cfg.train.steps},
                  {"batch", cfg.train.batch},
                  {"lr", cfg.train.lr},
                  {"uncond_prob", cfg.train.uncond_prob},
                  {"pad_prob", cfg.train.pad_prob}};
    j["erasure"] = {{"concept", cfg.erasure.concept_id},
                    {"eta", cfg.erasure.eta},
                    {"lambda", cfg.erasure.lambda},
                    {"steps", cfg.erasure.steps},
                    {"lr", cfg.erasure.lr},
                    {"batch_per_concept", cfg.erasure.batch_per_concept}};
    j["attack"] = {
        {"kind", cfg.attack.kind},
        {"seeds", cfg.attack.seeds},
        {"images_per_prompt", cfg.attack.images_per_prompt},
        {"record",
         {{"passes", cfg.attack.record.passes},
          {"grad_samples", cfg.attack.record.grad_samples},
          {"candidates", cfg.attack.record.candidates},
          {"length", cfg.attack.record.length},
          {"batch", cfg.attack.record.batch},
          {"reference_size", cfg.attack.record.reference_size},
          {"use_reference_as_batch", cfg.attack.record.use_reference_as_batch}}},
        {"embed",
         {{"variant", cfg.attack.embed.variant == EmbedVariant::kL1 ? "L1" : "L2"},
          {"epochs", cfg.attack.embed.epochs},
          {"lr", cfg.attack.embed.lr},
          {"batch", cfg.attack.embed.batch},
          {"train_size", cfg.attack.embed.train_size},
          {"eval_size", cfg.attack.embed.eval_size},
          {"init",
           cfg.attack.embed.init == EmbedInit::kRandomNormal ? "random-normal" : "near-target"},
          {"snapshot_interval", cfg.attack.embed.snapshot_interval}}}};
    j["classifier"] = {{"samples", cfg.classifier.samples},
                       {"shared_noise", cfg.classifier.shared_noise}};
    j["eval_images"] = cfg.eval_images;
    j["sweep_lengths"] = cfg.sweep_lengths;
    return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    cfg.master_seed = field<uint64_t>(j, "", "master_seed");

    const auto& jm = j.contains("model") ? j.at("model")
                                         : throw ConfigError("config: missing section model");
    cfg.model.d_z = field<size_t>(jm, "model", "d_z");
    cfg.model.d_e = field<size_t>(jm, "model", "d_e");
    cfg.model.d_t = field<size_t>(jm, "model", "d_t");
    cfg.model.hidden = field<size_t>(jm, "model", "hidden");
    cfg.model.vocab = field<size_t>(jm, "model", "vocab");
    cfg.model.concepts = field<size_t>(jm, "model", "concepts");
    cfg.model.max_len = field<size_t>(jm, "model", "max_len");

    if (!j.contains("schedule")) throw ConfigError("config: missing section schedule");
    const auto& js = j.at("schedule");
    cfg.schedule.timesteps = field<size_t>(js, "schedule", "timesteps");
    cfg.schedule.beta_min = field<double>(js, "schedule", "beta_min");
    cfg.schedule.beta_max = field<double>(js, "schedule", "beta_max");

    if (!j.contains("dataset")) throw ConfigError("config: missing section dataset");
    const auto& jd = j.at("dataset");
    cfg.dataset.separation = field<double>(jd, "dataset", "separation");
    cfg.dataset.sigma = field<double>(jd, "dataset", "sigma");

    if (!j.contains("train")) throw ConfigError("config: missing section train");
    const auto& jt = j.at("train");
    cfg.train.steps = field<size_t>(jt, "train", "steps");
    cfg.train.batch = field<size_t>(jt, "train", "batch");
    cfg.train.lr = field<double>(jt, "train", "lr");
    cfg.train.uncond_prob = field<double>(jt, "train", "uncond_prob");
    cfg.train.pad_prob = field<double>(jt, "train", "pad_prob");

    if (!j.contains("erasure")) throw ConfigError("config: missing section erasure");
    const auto& je = j.at("erasure");
    cfg.erasure.concept_id = field<size_t>(je, "erasure", "concept");
    cfg.erasure.eta = field<double>(je, "erasure", "eta");
    cfg.erasure.lambda = field<double>(je, "erasure", "lambda");
    cfg.erasure.steps = field<size_t>(je, "erasure", "steps");
    cfg.erasure.lr = field<double>(je, "erasure", "lr");
    cfg.erasure.batch_per_concept = field<size_t>(je, "erasure", "batch_per_concept");

    if (!j.contains("attack")) throw ConfigError("config: missing section attack");
    const auto& ja = j.at("attack");
    cfg.attack.kind = field<std::string>(ja, "attack", "kind");
    cfg.attack.seeds = field<size_t>(ja, "attack", "seeds");
    cfg.attack.images_per_prompt = field<size_t>(ja, "attack", "images_per_prompt");
    if (!ja.contains("record")) throw ConfigError("config: missing section attack.record");
    const auto& jar = ja.at("record");
    cfg.attack.record.passes = field<size_t>(jar, "attack.record", "passes");
    cfg.attack.record.grad_samples = field<size_t>(jar, "attack.record", "grad_samples");
    cfg.attack.record.candidates = field<size_t>(jar, "attack.record", "candidates");
    cfg.attack.record.length = field<size_t>(jar, "attack.record", "length");
    cfg.attack.record.batch = field<size_t>(jar, "attack.record", "batch");
    cfg.attack.record.reference_size = field<size_t>(jar, "attack.record", "reference_size");
    cfg.attack.record.use_reference_as_batch =
        field<bool>(jar, "attack.record", "use_reference_as_batch");
    if (!ja.contains("embed")) throw ConfigError("config: missing section attack.embed");
    const auto& jae = ja.at("embed");
    std::string variant = field<std::string>(jae, "attack.embed", "variant");
    if (variant == "L1") {
        cfg.attack.embed.variant = EmbedVariant::kL1;
    } else if (variant == "L2") {
        cfg.attack.embed.variant = EmbedVariant::kL2;
    } else {
        throw ConfigError("config: attack.embed.variant must be L1 or L2");
    }
    cfg.attack.embed.epochs = field<size_t>(jae, "attack.embed", "epochs");
    cfg.attack.embed.lr = field<double>(jae, "attack.embed", "lr");
    cfg.attack.embed.batch = field<size_t>(jae, "attack.embed", "batch");
    cfg.attack.embed.train_size = field<size_t>(jae, "attack.embed", "train_size");
    cfg.attack.embed.eval_size = field<size_t>(jae, "attack.embed", "eval_size");
    std::string init = field<std::string>(jae, "attack.embed", "init");
    if (init == "random-normal") {
        cfg.attack.embed.init = EmbedInit::kRandomNormal;
    } else if (init == "near-target") {
        cfg.attack.embed.init = EmbedInit::kNearTarget;
    } else {
        throw ConfigError("config: attack.embed.init must be random-normal or near-target");
    }
    cfg.attack.embed.snapshot_interval = field<size_t>(jae, "attack.embed", "snapshot_interval");

    if (!j.contains("classifier")) throw ConfigError("config: missing section classifier");
    const auto& jc = j.at("classifier");
    cfg.classifier.samples = field<size_t>(jc, "classifier", "samples");
    cfg.classifier.shared_noise = field<bool>(jc, "classifier", "shared_noise");

    cfg.eval_images = field<size_t>(j, "", "eval_images");
    if (j.contains("sweep_lengths")) {
        cfg.sweep_lengths = j.at("sweep_lengths").get<std::vector<size_t>>();
    }
    validate_config(cfg);
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    expect_positive(cfg.model.d_z, "model.d_z");
    expect_positive(cfg.model.d_e, "model.d_e");
    expect_positive(cfg.model.d_t, "model.d_t");
    if (cfg.model.d_t % 2 != 0) throw ConfigError("config: model.d_t must be even");
    expect_positive(cfg.model.hidden, "model.hidden");
    expect_positive(cfg.model.vocab, "model.vocab");
    expect_positive(cfg.model.concepts, "model.concepts");
    expect_positive(cfg.model.max_len, "model.max_len");
    if (cfg.model.vocab < cfg.model.concepts + 2) {
        throw ConfigError("config: model.vocab must exceed concepts + pad + one filler");
    }
    if (cfg.model.d_z < cfg.model.concepts) {
        throw ConfigError("config: model.d_z must be at least model.concepts");
    }
    expect_positive(cfg.schedule.timesteps, "schedule.timesteps");
    if (!(cfg.schedule.beta_min > 0.0) || !(cfg.schedule.beta_min <= cfg.schedule.beta_max) ||
        !(cfg.schedule.beta_max < 1.0)) {
        throw ConfigError("config: schedule betas must satisfy 0 < beta_min <= beta_max < 1");
    }
    if (!(cfg.dataset.sigma > 0.0)) throw ConfigError("config: dataset.sigma must be positive");
    expect_positive(cfg.train.batch, "train.batch");
    if (cfg.erasure.concept_id < 1 || cfg.erasure.concept_id > cfg.model.concepts) {
        throw ConfigError("config: erasure.concept must be in [1, model.concepts]");
    }
    if (cfg.erasure.eta < 0.0 || cfg.erasure.lambda < 0.0) {
        throw ConfigError("config: erasure.eta and erasure.lambda must be non-negative");
    }
    expect_positive(cfg.erasure.batch_per_concept, "erasure.batch_per_concept");
    if (cfg.attack.kind != "record" && cfg.attack.kind != "embed") {
        throw ConfigError("config: attack.kind must be record or embed");
    }
    expect_positive(cfg.attack.seeds, "attack.seeds");
    expect_positive(cfg.attack.images_per_prompt, "attack.images_per_prompt");
    if (cfg.attack.record.length == 0 || cfg.attack.record.length > cfg.model.max_len) {
        throw ConfigError("config: attack.record.length must be in [1, model.max_len]");
    }
    if (cfg.attack.record.grad_samples == 0 ||
        cfg.attack.record.grad_samples > cfg.model.vocab) {
        throw ConfigError("config: attack.record.grad_samples must be in [1, model.vocab]");
    }
    if (cfg.attack.record.candidates == 0 || cfg.attack.record.candidates > cfg.model.vocab) {
        throw ConfigError("config: attack.record.candidates must be in [1, model.vocab]");
    }
    expect_positive(cfg.attack.record.reference_size, "attack.record.reference_size");
    expect_positive(cfg.attack.embed.epochs, "attack.embed.epochs");
    expect_positive(cfg.attack.embed.batch, "attack.embed.batch");
    expect_positive(cfg.attack.embed.train_size, "attack.embed.train_size");
    expect_positive(cfg.attack.embed.eval_size, "attack.embed.eval_size");
    expect_positive(cfg.classifier.samples, "classifier.samples");
    expect_positive(cfg.eval_images, "eval_images");
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_hash(const ExperimentConfig& cfg) {
    return sha1_hex(serialize_config(cfg));
}

}  // namespace recordkit
