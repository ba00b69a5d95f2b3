#include <doctest.h>

#include <cmath>
#include <vector>

#include "jnd/error.hpp"
#include "jnd/regularizers.hpp"
#include "support.hpp"

using namespace jnd;

namespace {

template <typename Loss>
double fd_error(const Image& img, Loss loss, double h = 1e-4) {
  const Image g = loss(img).gradient;
  double worst = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    Image p = img, m = img;
    p[i] += h;
    m[i] -= h;
    const double fd = (loss(p).value - loss(m).value) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-9, std::abs(fd) + std::abs(g[i])));
  }
  return worst;
}

// Brute-force TV: every pair of horizontal or vertical neighbours.
double tv_oracle(const Image& img) {
  double s = 0.0;
  for (std::size_t y = 0; y < img.dim(0); ++y)
    for (std::size_t x = 0; x < img.dim(1); ++x)
      for (std::size_t c = 0; c < img.dim(2); ++c) {
        if (x + 1 < img.dim(1)) s += std::pow(img.at(y, x + 1, c) - img.at(y, x, c), 2);
        if (y + 1 < img.dim(0)) s += std::pow(img.at(y + 1, x, c) - img.at(y, x, c), 2);
      }
  return s / static_cast<double>(img.size());
}

}  // namespace

TEST_SUITE("regularizers") {
  TEST_CASE("bounded range examples") {
    Rng rng(1);
    const RegularizerValue in = br_loss(test::random_image(6, 6, 3, rng));
    CHECK(in.value == 0.0);
    CHECK(test::max_abs(in.gradient) == 0.0);
    CHECK(br_loss(Tensor({1, 1, 1}, {300.0})).value == 45.0);
    const RegularizerValue two = br_loss(Tensor({1, 2, 1}, {-4.0, 260.0}));
    CHECK(two.value == doctest::Approx((4.0 + 5.0) / 2));
    CHECK(two.gradient.values() == std::vector<double>{-0.5, 0.5});
  }

  TEST_CASE("bounded range gradient matches central differences away from kinks") {
    Rng rng(2);
    Image img = test::random_image(6, 6, 3, rng, 5.0, 250.0);
    for (std::size_t i = 0; i < img.size(); i += 5) img[i] = rng.uniform() < 0.5 ? rng.uniform(-80, -1) : rng.uniform(256, 340);
    CHECK(fd_error(img, br_loss) < 1e-6);
  }

  TEST_CASE("total variation examples") {
    CHECK(tv_loss(Tensor({1, 2, 1}, {0.0, 10.0})).value == 50.0);
    const RegularizerValue flat = tv_loss(make_image(4, 4, 3, 77.0));
    CHECK(flat.value == 0.0);
    CHECK(test::max_abs(flat.gradient) == 0.0);
    CHECK_THROWS_AS(tv_loss(make_image(1, 1, 3)), InputError);
  }

  TEST_CASE("total variation against the brute-force sum") {
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
      const Image img = test::random_image(3 + static_cast<std::size_t>(i), 5, 2, rng);
      CHECK(tv_loss(img).value == doctest::Approx(tv_oracle(img)).epsilon(1e-12));
    }
  }

  TEST_CASE("total variation gradient matches central differences") {
    Rng rng(4);
    CHECK(fd_error(test::random_image(8, 8, 3, rng), tv_loss) < 1e-6);
  }

  TEST_CASE("total variation is translation invariant") {
    Rng rng(5);
    const Image img = test::random_image(6, 7, 3, rng);
    Image shifted = img;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 31.5;
    const RegularizerValue a = tv_loss(img), b = tv_loss(shifted);
    CHECK(b.value == doctest::Approx(a.value).epsilon(1e-12));
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(b.gradient[i] == doctest::Approx(a.gradient[i]).epsilon(1e-9));
  }

  TEST_CASE("zero exactly when in range / constant") {
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
      Image img = test::random_image(4, 4, 1, rng, -20.0, 275.0);
      bool out_of_range = false;
      for (std::size_t k = 0; k < img.size(); ++k) out_of_range |= img[k] < 0.0 || img[k] > 255.0;
      CHECK(br_loss(img).value >= 0.0);
      CHECK((br_loss(img).value > 0.0) == out_of_range);
      CHECK(tv_loss(img).value > 0.0);
      CHECK(br_loss(img).gradient.all_finite());
      CHECK(tv_loss(img).gradient.all_finite());
    }
  }

  TEST_CASE("clamp") {
    CHECK(clamp_to_range(Tensor({1, 3, 1}, {-5.0, 100.0, 300.0})).values() == std::vector<double>{0.0, 100.0, 255.0});
    Rng rng(7);
    const Image in = test::random_image(5, 5, 3, rng);
    CHECK(clamp_to_range(in) == in);
    const Image wild = test::random_image(5, 5, 3, rng, -500.0, 800.0);
    CHECK(clamp_to_range(clamp_to_range(wild)) == clamp_to_range(wild));
  }
}
