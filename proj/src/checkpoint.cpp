#include "jnd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <cstdio>

#include "jnd/dataset.hpp"
#include "jnd/error.hpp"

namespace jnd {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void read_tensor(Reader& r, Tensor& t, const char* what) {
  for (double& v : t.data()) v = r.f64(what);
}

}  // namespace

nlohmann::json spec_to_json(const ModelSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : spec.layers) {
    nlohmann::json j{{"kind", layer_kind_name(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv:
        j["filters"] = l.filters;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        break;
      case LayerKind::dense:
        j["units"] = l.units;
        break;
      case LayerKind::scale:
        j["factor"] = l.factor;
        j["offset"] = l.offset;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  return {{"input_shape", spec.input_shape}, {"num_classes", spec.num_classes}, {"layers", layers}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec spec;
    spec.input_shape = j.at("input_shape").get<Shape>();
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l = LayerSpec::of(parse_layer_kind(lj.at("kind").get<std::string>()));
      switch (l.kind) {
        case LayerKind::conv:
          l.filters = lj.at("filters").get<std::size_t>();
          l.kernel = lj.at("kernel").get<std::size_t>();
          l.stride = lj.at("stride").get<std::size_t>();
          l.padding = lj.at("padding").get<std::size_t>();
          break;
        case LayerKind::dense:
          l.units = lj.at("units").get<std::size_t>();
          break;
        case LayerKind::scale:
          l.factor = lj.at("factor").get<double>();
          l.offset = lj.at("offset").get<double>();
          break;
        default:
          break;
      }
      spec.layers.push_back(l);
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid model spec JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid model spec: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("invalid model spec: ") + e.what());
  }
}

std::string encode_checkpoint(const Model& model) {
  std::string out = "JNDM";
  put_u32(out, kCheckpointVersion);
  const std::string spec = spec_to_json(model.spec()).dump();
  put_u32(out, static_cast<std::uint32_t>(spec.size()));
  out += spec;
  for (const LayerParams& p : model.parameters()) {
    for (double v : p.weight.data()) put_f64(out, v);
    for (double v : p.bias.data()) put_f64(out, v);
  }
  return out;
}

Model decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != "JNDM") throw FormatError("not a checkpoint: bad magic bytes");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t len = r.u32("spec length");
  const std::string spec_text = r.take(len, "spec");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(spec_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint spec is not valid JSON: ") + e.what());
  }
  ModelSpec spec = spec_from_json(j);
  Parameters params = zero_parameters(spec);
  for (LayerParams& p : params) {
    read_tensor(r, p.weight, "weights");
    read_tensor(r, p.bias, "biases");
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes after the last weight block");
  try {
    return Model(std::move(spec), std::move(params));
  } catch (const InputError& e) {
    throw FormatError(std::string("checkpoint weights rejected: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto raw = read_file_bytes(path);
  try {
    return decode_checkpoint(std::string(raw.begin(), raw.end()));
  } catch (const VersionMismatchError& e) {
    throw VersionMismatchError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace jnd
