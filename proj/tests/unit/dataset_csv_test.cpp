#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "jnd/csv.hpp"
#include "jnd/dataset.hpp"
#include "jnd/error.hpp"
#include "support.hpp"

using namespace jnd;

namespace {

std::vector<std::uint8_t> cifar_record(std::uint8_t label, std::uint8_t fill) {
  std::vector<std::uint8_t> r(3073, fill);
  r[0] = label;
  return r;
}

}  // namespace

TEST_SUITE("data-io") {
  TEST_CASE("hand-built CIFAR record") {
    const Dataset d = decode_cifar10(cifar_record(3, 128));
    REQUIRE(d.size() == 1);
    CHECK(d.labels[0] == 3);
    CHECK(d.images[0].shape() == Shape{32, 32, 3});
    for (std::size_t i = 0; i < d.images[0].size(); ++i) CHECK(d.images[0][i] == 128.0);
    CHECK(d.class_names == cifar10_class_names());
  }

  TEST_CASE("CIFAR planes are red, green, blue in row-major order") {
    std::vector<std::uint8_t> r(3073);
    r[0] = 1;
    for (std::size_t i = 0; i < 3072; ++i) r[1 + i] = static_cast<std::uint8_t>((i * 7 + i / 1024) % 251);
    const Image img = decode_cifar10(r).images[0];
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 32; y += 5)
        for (std::size_t x = 0; x < 32; x += 3) CHECK(img.at(y, x, c) == r[1 + c * 1024 + y * 32 + x]);
  }

  TEST_CASE("CIFAR format errors") {
    CHECK_THROWS_AS(decode_cifar10(std::vector<std::uint8_t>(3072)), FormatError);
    auto two = cifar_record(1, 0);
    const auto bad = cifar_record(10, 0);
    two.insert(two.end(), bad.begin(), bad.end());
    try {
      decode_cifar10(two);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
  }

  TEST_CASE("CIFAR round trip") {
    std::vector<std::uint8_t> bytes;
    Rng rng(1);
    for (int i = 0; i < 4; ++i) {
      auto r = cifar_record(static_cast<std::uint8_t>(i * 2), 0);
      for (std::size_t k = 1; k < r.size(); ++k) r[k] = static_cast<std::uint8_t>(rng.index(256));
      bytes.insert(bytes.end(), r.begin(), r.end());
    }
    CHECK(encode_cifar10(decode_cifar10(bytes)) == bytes);
    test::TempDir dir("cifar");
    save_cifar10_batch(decode_cifar10(bytes), dir / "b.bin");
    CHECK(read_file_bytes(dir / "b.bin") == bytes);
    const Dataset twice = load_cifar10_batches({dir / "b.bin", dir / "b.bin"});
    CHECK(twice.size() == 8);
    CHECK(twice.labels[4] == 0);
  }

  TEST_CASE("PPM bytes") {
    CHECK(encode_ppm(make_image(1, 1, 3, 255.0)) == std::string("P6\n1 1\n255\n\xff\xff\xff", 14));
    const std::string rounded = encode_ppm(make_image(1, 1, 3, 127.6));
    CHECK(static_cast<unsigned char>(rounded.back()) == 128);
    CHECK(static_cast<unsigned char>(encode_ppm(make_image(1, 1, 3, 300.0)).back()) == 255);
  }

  TEST_CASE("PPM round trip and errors") {
    Rng rng(2);
    Image img = make_image(5, 7, 3);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(rng.index(256));
    CHECK(decode_ppm(encode_ppm(img)) == img);
    test::TempDir dir("ppm");
    save_ppm(img, dir / "x.ppm");
    CHECK(load_ppm(dir / "x.ppm") == img);
    CHECK_THROWS_AS(decode_ppm("P5\n1 1\n255\n\x01"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P6\n2 2\n255\n\x01\x02"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P6\n1 1\n65535\n\x01\x02\x03"), FormatError);
    CHECK_THROWS_AS(decode_ppm("garbage"), FormatError);
  }

  TEST_CASE("synthetic data is deterministic") {
    const SyntheticSpec s = test::small_synthetic(4, 10, 3);
    const Dataset a = generate_synthetic(s), b = generate_synthetic(s);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
    SyntheticSpec other = s;
    other.seed = 4;
    CHECK_FALSE(generate_synthetic(other).images == a.images);
    CHECK(a.size() == 40);
    CHECK_NOTHROW(a.validate());
    for (const Image& img : a.images)
      for (std::size_t i = 0; i < img.size(); ++i) {
        CHECK(img[i] >= 0.0);
        CHECK(img[i] <= 255.0);
      }
    const auto manifest = synthetic_manifest(s);
    CHECK(manifest.at("seed").get<std::uint64_t>() == 3);
  }

  TEST_CASE("synthetic size strings") {
    const SyntheticSpec s = parse_synthetic_size("4x500");
    CHECK(s.classes == 4);
    CHECK(s.per_class == 500);
    CHECK_THROWS_AS(parse_synthetic_size("4by500"), InputError);
    CHECK_THROWS_AS(parse_synthetic_size("4x"), InputError);
  }

  TEST_CASE("slicing") {
    const Dataset d = generate_synthetic(test::small_synthetic(2, 5, 1));
    const Dataset s = d.slice(3, 4);
    REQUIRE(s.size() == 4);
    CHECK(s.images[0] == d.images[3]);
    CHECK(d.slice(8, 10).size() == 2);
    CHECK(d.slice(20, 3).empty());
    CHECK(d.head(2).size() == 2);
  }
}

TEST_SUITE("csv") {
  TEST_CASE("reals round trip exactly") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      const double v = rng.normal() * std::pow(10.0, rng.uniform(-12, 12));
      CHECK(std::stod(format_real(v)) == v);
    }
    CHECK(format_real(0.1) == "0.1");
    CHECK(format_real(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_real(-std::numeric_limits<double>::infinity()) == "-inf");
  }

  TEST_CASE("escaping and parsing") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CsvTable t({std::string(kCsvSchemaTag), "name", "value"});
    t.add(kCsvSchemaValue).add("x,y").add(1.5);
    t.end_row();
    t.add(kCsvSchemaValue).add("line\nbreak").add(std::size_t{7});
    t.end_row();
    const auto rows = parse_csv(t.str());
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"schema=1", "name", "value"});
    CHECK(rows[1] == std::vector<std::string>{"1", "x,y", "1.5"});
    CHECK(rows[2][1] == "line\nbreak");
    CHECK_THROWS_AS(parse_csv("a,\"b\n"), FormatError);
  }

  TEST_CASE("rows must match the header") {
    CsvTable t({"a", "b"});
    t.add("1");
    CHECK_THROWS_AS(t.end_row(), InputError);
  }
}
