#pragma once

// Command-line front end: train | attack | compare | sweep | stats.
// Exit codes: 0 success, 1 internal error, 2 usage or input error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jnd/dataset.hpp"

namespace jnd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// A dataset named on the command line: "synthetic:CxN[:SEED]" or a
// comma-separated list of CIFAR-10 batch files, optionally sliced.
struct DataSource {
  std::string spec;
  std::size_t skip = 0;
  std::optional<std::size_t> count;
};

struct LoadedData {
  Dataset data;
  // Source description with file hashes or generator parameters.
  nlohmann::json identity;
  // Index of data.images[0] within the unsliced source.
  std::size_t first_index = 0;
};

// `default_seed` seeds a synthetic source that names no seed of its own.
// Throws InputError for missing files and ConfigError for malformed specs.
LoadedData load_source(const DataSource& source, std::uint64_t default_seed);

// Seed from the flag, else JND_SEED, else 1. Throws ConfigError for a
// malformed JND_SEED.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag);

std::string toolkit_version();

}  // namespace jnd::cli
