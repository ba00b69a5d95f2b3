#pragma once

// Checkpoint layout (little-endian):
//   "JNDM" | u32 version (=1) | u32 n | n bytes UTF-8 JSON ModelSpec |
//   for each parametric layer in spec order: weight f64[...] then bias f64[...]

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "jnd/model.hpp"

namespace jnd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

std::string encode_checkpoint(const Model& model);
// Throws FormatError (VersionMismatchError for a wrong version word) on any
// malformed input; never returns a partial model.
Model decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 over the bytes, as 16 hex digits.
std::string content_hash(const std::string& bytes);

}  // namespace jnd
