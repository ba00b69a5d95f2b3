#include "jnd/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "jnd/error.hpp"
#include "jnd/random.hpp"

namespace jnd {

void Dataset::validate() const {
  if (images.size() != labels.size()) {
    throw InputError("dataset has " + std::to_string(images.size()) + " images but " + std::to_string(labels.size()) +
                     " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_names.size()) {
      throw InputError("record " + std::to_string(i) + " has label " + std::to_string(labels[i]) + " but only " +
                       std::to_string(class_names.size()) + " classes");
    }
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  Dataset out;
  out.class_names = class_names;
  const std::size_t b = std::min(begin, images.size());
  const std::size_t e = b + std::min(count, images.size() - b);
  out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(b), images.begin() + static_cast<std::ptrdiff_t>(e));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(b), labels.begin() + static_cast<std::ptrdiff_t>(e));
  return out;
}

const std::vector<std::string>& cifar10_class_names() {
  static const std::vector<std::string> names = {"airplane", "automobile", "bird",  "cat",  "deer",
                                                 "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

Dataset decode_cifar10(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 batch length " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                      std::to_string(kCifarRecordBytes));
  }
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  Dataset ds;
  ds.class_names = cifar10_class_names();
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= 10) {
      throw FormatError("CIFAR-10 record " + std::to_string(r) + " has label " + std::to_string(rec[0]) + " (>= 10)");
    }
    Image img = make_image(kCifarSide, kCifarSide, 3);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::uint8_t* src = rec + 1 + c * plane;
      for (std::size_t p = 0; p < plane; ++p) img.at(p / kCifarSide, p % kCifarSide, c) = src[p];
    }
    ds.labels.push_back(rec[0]);
    ds.images.push_back(std::move(img));
  }
  return ds;
}

Dataset load_cifar10_batch(const std::filesystem::path& path) {
  try {
    return decode_cifar10(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Dataset load_cifar10_batches(const std::vector<std::filesystem::path>& paths) {
  Dataset all;
  all.class_names = cifar10_class_names();
  for (const auto& p : paths) {
    Dataset d = load_cifar10_batch(p);
    std::move(d.images.begin(), d.images.end(), std::back_inserter(all.images));
    all.labels.insert(all.labels.end(), d.labels.begin(), d.labels.end());
  }
  return all;
}

std::vector<std::uint8_t> encode_cifar10(const Dataset& dataset) {
  dataset.validate();
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(dataset.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const Image& img = dataset.images[r];
    if (img.shape() != Shape{kCifarSide, kCifarSide, 3}) {
      throw DimensionError("CIFAR-10 records must be 32x32x3, record " + std::to_string(r) + " is " +
                           shape_string(img.shape()));
    }
    if (dataset.labels[r] >= 10) throw InputError("CIFAR-10 labels must be < 10");
    bytes.push_back(static_cast<std::uint8_t>(dataset.labels[r]));
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = std::clamp(std::nearbyint(img.at(p / kCifarSide, p % kCifarSide, c)), 0.0, 255.0);
        bytes.push_back(static_cast<std::uint8_t>(v));
      }
    }
  }
  return bytes;
}

void save_cifar10_batch(const Dataset& dataset, const std::filesystem::path& path) {
  const auto bytes = encode_cifar10(dataset);
  write_file_bytes(path, std::string(bytes.begin(), bytes.end()));
}

std::string encode_ppm(const Image& image) {
  require_image(image, "encode_ppm");
  if (image.dim(2) != 3) throw DimensionError("PPM needs 3 channels, got " + std::to_string(image.dim(2)));
  std::string out = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  out.reserve(out.size() + image.size());
  for (double v : image.data()) {
    // Round half away from zero: 127.5 -> 128.
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0, 255.0)))));
  }
  return out;
}

Image decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) -> std::size_t {
    skip_space_and_comments();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > 1'000'000) throw FormatError(std::string("PPM: ") + what + " too large");
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("PPM: missing ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("PPM: missing P6 magic");
  pos = 2;
  const std::size_t width = read_uint("width");
  const std::size_t height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (width == 0 || height == 0) throw FormatError("PPM: zero extent");
  if (maxval != 255) throw FormatError("PPM: only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("PPM: header not terminated by whitespace");
  }
  ++pos;
  const std::size_t need = width * height * 3;
  if (bytes.size() - pos != need) {
    throw FormatError("PPM: expected " + std::to_string(need) + " pixel bytes, found " + std::to_string(bytes.size() - pos));
  }
  Image img = make_image(height, width, 3);
  for (std::size_t i = 0; i < need; ++i) img[i] = static_cast<std::uint8_t>(bytes[pos + i]);
  return img;
}

void save_ppm(const Image& image, const std::filesystem::path& path) { write_file_bytes(path, encode_ppm(image)); }

Image load_ppm(const std::filesystem::path& path) {
  const auto raw = read_file_bytes(path);
  return decode_ppm(std::string(raw.begin(), raw.end()));
}

namespace {

struct Blob {
  double cy, cx, sigma;
  std::vector<double> amplitude;  // per channel
};

struct ClassPattern {
  std::vector<double> background;  // per channel
  std::vector<Blob> blobs;
};

constexpr std::size_t kBlobsPerClass = 3;

std::vector<ClassPattern> class_patterns(const SyntheticSpec& spec, Rng& rng) {
  std::vector<ClassPattern> patterns(spec.classes);
  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  for (auto& p : patterns) {
    for (std::size_t c = 0; c < spec.channels; ++c) p.background.push_back(rng.uniform(70.0, 130.0));
    for (std::size_t b = 0; b < kBlobsPerClass; ++b) {
      Blob blob;
      blob.cy = rng.uniform(0.15 * h, 0.85 * h);
      blob.cx = rng.uniform(0.15 * w, 0.85 * w);
      blob.sigma = rng.uniform(0.08, 0.2) * std::min(h, w);
      for (std::size_t c = 0; c < spec.channels; ++c) blob.amplitude.push_back(rng.uniform(-90.0, 90.0));
      p.blobs.push_back(std::move(blob));
    }
  }
  return patterns;
}

Image render_mean(const SyntheticSpec& spec, const ClassPattern& p) {
  Image img = make_image(spec.height, spec.width, spec.channels);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      for (std::size_t c = 0; c < spec.channels; ++c) {
        double v = p.background[c];
        for (const Blob& b : p.blobs) {
          const double dy = static_cast<double>(y) - b.cy, dx = static_cast<double>(x) - b.cx;
          v += b.amplitude[c] * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
        }
        img.at(y, x, c) = v;
      }
    }
  }
  return img;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw InputError("synthetic dataset needs at least 2 classes");
  if (spec.height == 0 || spec.width == 0 || spec.channels == 0) throw InputError("synthetic image extents must be positive");
  Rng rng(spec.seed);
  const auto patterns = class_patterns(spec, rng);
  std::vector<Image> means;
  for (const auto& p : patterns) means.push_back(render_mean(spec, p));

  Dataset ds;
  for (std::size_t c = 0; c < spec.classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
  for (std::size_t i = 0; i < spec.per_class; ++i) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      Image img = means[c];
      for (double& v : img.data()) v = std::clamp(v + rng.normal(0.0, spec.noise_sigma), 0.0, 255.0);
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

nlohmann::json synthetic_manifest(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  const auto patterns = class_patterns(spec, rng);
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < patterns.size(); ++c) {
    const Image mean = render_mean(spec, patterns[c]);
    double total = 0.0;
    for (double v : mean.data()) total += std::clamp(v, 0.0, 255.0);
    nlohmann::json blobs = nlohmann::json::array();
    for (const Blob& b : patterns[c].blobs) {
      blobs.push_back({{"center_y", b.cy}, {"center_x", b.cx}, {"sigma", b.sigma}, {"amplitude", b.amplitude}});
    }
    classes.push_back({{"label", c},
                       {"background", patterns[c].background},
                       {"blobs", blobs},
                       {"mean_intensity", total / static_cast<double>(mean.size())}});
  }
  return {{"kind", "synthetic"},
          {"seed", spec.seed},
          {"classes", spec.classes},
          {"per_class", spec.per_class},
          {"height", spec.height},
          {"width", spec.width},
          {"channels", spec.channels},
          {"noise_sigma", spec.noise_sigma},
          {"class_means", classes}};
}

SyntheticSpec parse_synthetic_size(const std::string& text) {
  const auto x = text.find('x');
  SyntheticSpec spec;
  try {
    if (x == std::string::npos) throw std::invalid_argument("no x");
    std::size_t used = 0;
    spec.classes = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("trailing");
    spec.per_class = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw InputError("synthetic size must look like CLASSESxPER_CLASS (e.g. 4x500), got '" + text + "'");
  }
  return spec;
}

}  // namespace jnd
