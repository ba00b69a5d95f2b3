#pragma once

// Image datasets: CIFAR-10 binary batches, binary PPM files, and a seeded
// synthetic generator for fast desk-scale runs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "jnd/tensor.hpp"

namespace jnd {

struct Dataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  // Throws InputError when images/labels disagree or a label is out of range.
  void validate() const;
  // First n records (or all, if fewer).
  Dataset head(std::size_t n) const { return slice(0, n); }
  // Records [begin, begin + count), truncated at the end.
  Dataset slice(std::size_t begin, std::size_t count) const;
};

const std::vector<std::string>& cifar10_class_names();

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

// Each 3073-byte record: label byte, then the R, G and B planes (1024 bytes
// each, row-major). Pixels are widened to doubles in [0, 255].
Dataset decode_cifar10(const std::vector<std::uint8_t>& bytes);
Dataset load_cifar10_batch(const std::filesystem::path& path);
// Concatenates several batch files in order.
Dataset load_cifar10_batches(const std::vector<std::filesystem::path>& paths);
std::vector<std::uint8_t> encode_cifar10(const Dataset& dataset);
void save_cifar10_batch(const Dataset& dataset, const std::filesystem::path& path);

// Binary P6, maxval 255; pixels are clamped then rounded to nearest.
std::string encode_ppm(const Image& image);
Image decode_ppm(const std::string& bytes);
void save_ppm(const Image& image, const std::filesystem::path& path);
Image load_ppm(const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t per_class = 500;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::uint64_t seed = 0;
  double noise_sigma = 20.0;
};

// Each class gets a mean pattern built from a background colour plus a few
// coloured Gaussian blobs; samples add i.i.d. N(0, noise_sigma^2) pixel noise
// and are clamped to [0, 255]. Records are interleaved by class.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Seed, extents and the per-class blob parameters and mean intensities.
nlohmann::json synthetic_manifest(const SyntheticSpec& spec);

// Parses "CLASSESxPER_CLASS", e.g. "4x500".
SyntheticSpec parse_synthetic_size(const std::string& text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace jnd
