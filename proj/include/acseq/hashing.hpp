#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace acseq {

/// Git blob id: SHA-1 over "blob <size>\0" + content, lowercase hex.
std::string git_blob_hash(std::string_view content);
std::string file_git_hash(const std::filesystem::path& path);

}  // namespace acseq
