#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace recordkit {

// SHA-1 as a hex string.
std::string sha1_hex(std::string_view data);

// git-style blob hash: sha1("blob <len>\0<content>").
std::string git_blob_hash(std::string_view content);
std::string git_blob_hash_file(const std::string& path);

}  // namespace recordkit
