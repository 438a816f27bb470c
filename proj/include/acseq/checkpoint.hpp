#pragma once

// Binary checkpoint layout (all integers u32 little-endian):
//   "ACSEQ-CKPT v1\n"
//   <one line of JSON metadata>\n
//   per parameter, in name order:
//     name length, name bytes, rank, dims..., row-major float64 LE payload

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "acseq/params.hpp"

namespace acseq::core {

inline constexpr const char* kCheckpointMagic = "ACSEQ-CKPT v1\n";

struct Checkpoint {
  nlohmann::json meta;
  ParamStore params;
};

/// Serializes the union of the stores' parameters; names must be unique
/// across stores. Output is written to a temporary file and renamed.
std::string encode_checkpoint(const nlohmann::json& meta, std::span<const ParamStore* const> stores);
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      std::span<const ParamStore* const> stores);

Checkpoint decode_checkpoint(const std::string& bytes);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every parameter whose name starts with `prefix` into `dst`, which
/// must already declare it with the same shape.
void load_params(const ParamStore& src, ParamStore& dst, const std::string& prefix);

/// Writes `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace acseq::core
