#pragma once

#include <string>
#include <vector>

namespace recordkit {

struct ManifestEntry {
    std::string path;  // relative to the output directory
    std::string sha1;  // git-style blob hash of the file content
    uint64_t bytes = 0;
    std::string timestamp;  // ISO-8601 UTC, informational only
};

// Re-running with an identical config must reproduce every entry's hash;
// the timestamps are the one field allowed to differ.
struct RunManifest {
    std::string config_hash;
    std::vector<ManifestEntry> entries;

    void upsert(ManifestEntry entry);
    const ManifestEntry* find(const std::string& path) const;
};

RunManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const RunManifest& manifest);

// Hashes the artifact and records it under its path relative to out_dir.
void record_artifact(RunManifest& manifest, const std::string& out_dir,
                     const std::string& artifact_path);

std::string iso8601_utc_now();

}  // namespace recordkit
