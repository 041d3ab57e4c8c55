#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "recordkit/config.hpp"
#include "recordkit/errors.hpp"
#include "recordkit/manifest.hpp"
#include "recordkit/pipeline.hpp"
#include "recordkit/record_attack.hpp"
#include "recordkit/sha1.hpp"

using namespace recordkit;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.master_seed = 7;
    cfg.model.d_z = 4;
    cfg.model.d_e = 6;
    cfg.model.d_t = 4;
    cfg.model.hidden = 16;
    cfg.model.vocab = 12;
    cfg.model.concepts = 2;
    cfg.model.max_len = 5;
    cfg.schedule.timesteps = 20;
    cfg.schedule.beta_min = 1e-3;
    cfg.schedule.beta_max = 0.2;
    cfg.train.steps = 600;
    cfg.train.batch = 16;
    cfg.train.lr = 3e-3;
    cfg.erasure.concept_id = 1;
    cfg.erasure.steps = 100;
    cfg.erasure.lr = 1e-3;
    cfg.erasure.batch_per_concept = 4;
    cfg.attack.kind = "record";
    cfg.attack.seeds = 2;
    cfg.attack.images_per_prompt = 3;
    cfg.attack.record.passes = 2;
    cfg.attack.record.grad_samples = 8;
    cfg.attack.record.candidates = 8;
    cfg.attack.record.length = 3;
    cfg.attack.record.batch = 1;
    cfg.attack.record.reference_size = 4;
    cfg.attack.embed.epochs = 3;
    cfg.attack.embed.batch = 2;
    cfg.attack.embed.train_size = 6;
    cfg.attack.embed.eval_size = 4;
    cfg.attack.embed.snapshot_interval = 2;
    cfg.classifier.samples = 4;
    cfg.eval_images = 10;
    cfg.sweep_lengths = {2};
    return cfg;
}

std::string read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("sha1 known vectors") {
    CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
    CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    // 64-byte boundary case.
    std::string block(64, 'a');
    CHECK(sha1_hex(block) == sha1_hex(block));
    CHECK(sha1_hex(block) != sha1_hex(block + "b"));
}

TEST_CASE("config: serialize/parse round-trip is exact") {
    ExperimentConfig cfg = tiny_config();
    std::string text = serialize_config(cfg);
    ExperimentConfig back = parse_config(text);
    CHECK(back == cfg);
    CHECK(config_hash(back) == config_hash(cfg));

    ExperimentConfig defaults;
    CHECK(parse_config(serialize_config(defaults)) == defaults);
}

TEST_CASE("config: invalid values name the field") {
    ExperimentConfig cfg = tiny_config();
    cfg.model.vocab = 0;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("model.vocab"), ConfigError);

    std::string text = serialize_config(tiny_config());
    auto broken = text;
    broken.replace(broken.find("\"vocab\": 12"), 11, "\"vocab\": 0");
    CHECK_THROWS_WITH_AS(parse_config(broken), doctest::Contains("model.vocab"), ConfigError);

    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("{\"master_seed\": 1}"), doctest::Contains("model"),
                         ConfigError);
}

TEST_CASE("manifest round-trip and upsert") {
    TempDir dir("recordkit_manifest_test");
    std::string file = dir.str() + "/artifact.bin";
    {
        std::ofstream os(file, std::ios::binary);
        os << "payload";
    }
    RunManifest m;
    m.config_hash = "abc";
    record_artifact(m, dir.str(), file);
    REQUIRE(m.entries.size() == 1);
    CHECK(m.entries[0].path == "artifact.bin");
    CHECK(m.entries[0].sha1 == git_blob_hash("payload"));
    CHECK(m.entries[0].bytes == 7);

    // Upsert replaces rather than duplicates.
    record_artifact(m, dir.str(), file);
    CHECK(m.entries.size() == 1);

    std::string mpath = dir.str() + "/manifest.json";
    save_manifest(mpath, m);
    RunManifest loaded = load_manifest(mpath);
    CHECK(loaded.config_hash == "abc");
    REQUIRE(loaded.entries.size() == 1);
    CHECK(loaded.entries[0].sha1 == m.entries[0].sha1);

    CHECK_THROWS_AS(load_manifest(dir.str() + "/nope.json"), MissingArtifactError);
}

TEST_CASE("pipeline: full tiny run produces every artifact") {
    TempDir dir("recordkit_pipeline_test");
    ExperimentConfig cfg = tiny_config();
    PipelinePaths paths{dir.str()};

    CHECK_THROWS_AS(cmd_erase(cfg, dir.str()), MissingArtifactError);

    cmd_train(cfg, dir.str());
    CHECK(fs::exists(paths.baseline()));
    CHECK_THROWS_WITH_AS(cmd_attack(cfg, dir.str()), doctest::Contains("erased.ckpt"),
                         MissingArtifactError);

    cmd_erase(cfg, dir.str());
    CHECK(fs::exists(paths.erased()));

    cmd_attack(cfg, dir.str());
    CHECK(fs::exists(paths.attack_result("record", 0)));
    CHECK(fs::exists(paths.attack_result("record", 1)));

    cmd_evaluate(cfg, dir.str());
    CHECK(fs::exists(paths.evaluation_csv()));
    CHECK(fs::exists(paths.eval_summary()));

    cmd_analyze(cfg, dir.str());
    CHECK(fs::exists(paths.similarity_hist()));
    CHECK(fs::exists(paths.similarity_pairs()));
    CHECK(fs::exists(paths.pca_csv()));
    CHECK(fs::exists(paths.trajectory_csv()));
    CHECK(fs::exists(paths.analysis_summary()));

    cmd_sweep(cfg, dir.str(), {2});
    CHECK(fs::exists(paths.sweep_csv()));
    CHECK(fs::exists(paths.sweep_json()));
    CHECK_THROWS_AS(cmd_sweep(cfg, dir.str(), {}), ConfigError);

    RunManifest manifest = load_manifest(paths.manifest());
    CHECK(manifest.config_hash == config_hash(cfg));
    CHECK(manifest.find("baseline.ckpt") != nullptr);
    CHECK(manifest.find("sweep.csv") != nullptr);

    // Every hash in the manifest matches the file on disk.
    for (const ManifestEntry& e : manifest.entries) {
        CHECK(e.sha1 == git_blob_hash_file(dir.str() + "/" + e.path));
    }
}

TEST_CASE("pipeline: attack with zero passes keeps the initial prompt") {
    TempDir dir("recordkit_zero_pass_test");
    ExperimentConfig cfg = tiny_config();
    cfg.attack.seeds = 1;
    cfg.attack.record.passes = 0;
    cmd_train(cfg, dir.str());
    cmd_erase(cfg, dir.str());
    cmd_attack(cfg, dir.str());
    PipelinePaths paths{dir.str()};
    AttackResult result = read_attack_result(paths.attack_result("record", 0));
    CHECK(result.updates.empty());
    CHECK(result.prompt == result.initial);
}

TEST_CASE("pipeline: identical master seed reproduces identical bytes") {
    TempDir a("recordkit_repro_a"), b("recordkit_repro_b");
    ExperimentConfig cfg = tiny_config();
    cfg.attack.seeds = 1;
    for (const std::string& dir : {a.str(), b.str()}) {
        cmd_train(cfg, dir);
        cmd_erase(cfg, dir);
        cmd_attack(cfg, dir);
        cmd_evaluate(cfg, dir);
        cmd_analyze(cfg, dir);
    }
    RunManifest ma = load_manifest(PipelinePaths{a.str()}.manifest());
    RunManifest mb = load_manifest(PipelinePaths{b.str()}.manifest());
    REQUIRE(ma.entries.size() == mb.entries.size());
    for (const ManifestEntry& ea : ma.entries) {
        const ManifestEntry* eb = mb.find(ea.path);
        REQUIRE(eb != nullptr);
        CHECK(ea.sha1 == eb->sha1);
        CHECK(read_bytes(a.str() + "/" + ea.path) == read_bytes(b.str() + "/" + ea.path));
    }

    // A different seed produces different attack outcomes somewhere.
    TempDir c("recordkit_repro_c");
    ExperimentConfig cfg2 = cfg;
    cfg2.master_seed = cfg.master_seed + 1;
    cmd_train(cfg2, c.str());
    CHECK(read_bytes(a.str() + "/baseline.ckpt") != read_bytes(c.str() + "/baseline.ckpt"));
}

TEST_CASE("pipeline: embed attack kind end to end") {
    TempDir dir("recordkit_embed_pipeline_test");
    ExperimentConfig cfg = tiny_config();
    cfg.attack.kind = "embed";
    cfg.attack.seeds = 1;
    cmd_train(cfg, dir.str());
    cmd_erase(cfg, dir.str());
    cmd_attack(cfg, dir.str());
    PipelinePaths paths{dir.str()};
    CHECK(fs::exists(paths.attack_result("embed", 0)));
    CHECK(fs::exists(paths.embed_snapshots(0)));
    cmd_evaluate(cfg, dir.str());
    CHECK(fs::exists(paths.eval_summary()));
    cmd_analyze(cfg, dir.str());
    CHECK(fs::exists(paths.analysis_summary()));
}

#ifdef RECORDKIT_BIN
TEST_CASE("cli: exit codes for success, config error, missing artifact") {
    TempDir dir("recordkit_cli_test");
    std::string cfg_path = dir.str() + "/config.json";
    {
        std::ofstream os(cfg_path);
        os << serialize_config(tiny_config());
    }
    std::string bin = RECORDKIT_BIN;
    auto run = [&](const std::string& args) {
        std::string cmd = bin + " " + args + " > /dev/null 2>&1";
        int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    // Missing artifact: erase before train.
    CHECK(run("erase --config " + cfg_path + " --out " + dir.str()) == 2);
    CHECK(run("train --config " + cfg_path + " --out " + dir.str()) == 0);
    CHECK(run("erase --config " + cfg_path + " --out " + dir.str()) == 0);

    // Config error: malformed config file.
    std::string bad_path = dir.str() + "/bad.json";
    {
        std::ofstream os(bad_path);
        os << "{\"master_seed\": 1}";
    }
    CHECK(run("train --config " + bad_path + " --out " + dir.str()) == 1);
    CHECK(run("train --config " + dir.str() + "/absent.json") == 1);
    CHECK(run("bogus --config " + cfg_path) == 1);
}
#endif
