#include "recordkit/manifest.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "recordkit/errors.hpp"
#include "recordkit/sha1.hpp"

namespace recordkit {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void RunManifest::upsert(ManifestEntry entry) {
    for (ManifestEntry& e : entries) {
        if (e.path == entry.path) {
            e = std::move(entry);
            return;
        }
    }
    entries.push_back(std::move(entry));
}

const ManifestEntry* RunManifest::find(const std::string& path) const {
    for (const ManifestEntry& e : entries) {
        if (e.path == path) return &e;
    }
    return nullptr;
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("missing manifest: " + path);
    ordered_json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest: invalid JSON in " + path + ": " + e.what());
    }
    RunManifest m;
    m.config_hash = j.value("config_hash", "");
    for (const auto& e : j.value("entries", ordered_json::array())) {
        m.entries.push_back({e.at("path").get<std::string>(), e.at("sha1").get<std::string>(),
                             e.at("bytes").get<uint64_t>(),
                             e.value("timestamp", std::string{})});
    }
    return m;
}

void save_manifest(const std::string& path, const RunManifest& manifest) {
    ordered_json j;
    j["config_hash"] = manifest.config_hash;
    j["entries"] = ordered_json::array();
    for (const ManifestEntry& e : manifest.entries) {
        j["entries"].push_back({{"path", e.path},
                                {"sha1", e.sha1},
                                {"bytes", e.bytes},
                                {"timestamp", e.timestamp}});
    }
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw MissingArtifactError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

void record_artifact(RunManifest& manifest, const std::string& out_dir,
                     const std::string& artifact_path) {
    ManifestEntry entry;
    entry.path = fs::relative(artifact_path, out_dir).generic_string();
    entry.sha1 = git_blob_hash_file(artifact_path);
    entry.bytes = static_cast<uint64_t>(fs::file_size(artifact_path));
    entry.timestamp = iso8601_utc_now();
    manifest.upsert(std::move(entry));
}

std::string iso8601_utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace recordkit
