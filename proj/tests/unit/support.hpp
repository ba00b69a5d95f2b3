#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "jnd/dataset.hpp"
#include "jnd/model.hpp"
#include "jnd/random.hpp"
#include "jnd/tensor.hpp"
#include "jnd/train.hpp"

namespace jnd::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Image random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng, double lo = 0.0,
                          double hi = 255.0) {
  return random_tensor({h, w, c}, rng, lo, hi);
}

// Smooth random image: a few low-frequency waves plus mild noise, inside [lo, hi].
inline Image textured_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng, double lo = 30.0,
                            double hi = 225.0) {
  Image img = make_image(h, w, c);
  const double fx = rng.uniform(0.1, 0.6), fy = rng.uniform(0.1, 0.6), ph = rng.uniform(0.0, 6.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        const double s = 0.5 + 0.35 * std::sin(fx * x + fy * y + ph + k) + 0.15 * (rng.uniform() - 0.5);
        img.at(y, x, k) = lo + (hi - lo) * std::clamp(s, 0.0, 1.0);
      }
  return img;
}

inline double max_abs(const Tensor& t) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

inline double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Small random-weight desk model on 8x8x3 inputs.
inline Model small_model(std::size_t classes = 3, std::uint64_t seed = 3) {
  const ModelSpec spec = desk_model_spec(8, 8, 3, classes);
  return Model(spec, init_parameters(spec, seed));
}

inline SyntheticSpec small_synthetic(std::size_t classes = 3, std::size_t per_class = 60, std::uint64_t seed = 5) {
  SyntheticSpec s;
  s.classes = classes;
  s.per_class = per_class;
  s.height = 8;
  s.width = 8;
  s.channels = 3;
  s.seed = seed;
  return s;
}

// One draw of 3 classes x 80 at side x side; the first 180 images train,
// the last 60 test.
inline const Dataset& small_synthetic_pool(std::size_t side = 8) {
  static std::map<std::size_t, Dataset> pools;
  auto it = pools.find(side);
  if (it == pools.end()) {
    SyntheticSpec s = small_synthetic(3, 80, 5);
    s.height = s.width = side;
    it = pools.emplace(side, generate_synthetic(s)).first;
  }
  return it->second;
}

// Desk model trained on the small synthetic set; shared by the attack suites.
inline const Model& trained_small_model(std::size_t side = 8) {
  static std::map<std::size_t, Model> models;
  auto it = models.find(side);
  if (it == models.end()) {
    const ModelSpec spec = desk_model_spec(side, side, 3, 3);
    TrainSchedule sched;
    sched.epochs = 8;
    sched.learning_rate = 0.1;
    sched.seed = 11;
    const Parameters p = train(Model(spec, init_parameters(spec, 11)), small_synthetic_pool(side).head(180), sched).parameters;
    it = models.emplace(side, Model(spec, p)).first;
  }
  return it->second;
}

inline const Dataset& small_test_set(std::size_t side = 8) {
  static std::map<std::size_t, Dataset> sets;
  auto it = sets.find(side);
  if (it == sets.end()) it = sets.emplace(side, small_synthetic_pool(side).slice(180, 60)).first;
  return it->second;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("jnd_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace jnd::test
