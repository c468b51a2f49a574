#include <doctest.h>

#include <cmath>

#include "dtnt/fog.hpp"

using namespace dtnt;

namespace {

Tensor<float> random_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t = Tensor<float>::zeros({1, h, w});
  for (float& v : t.data()) v = static_cast<float>(rng.uniform01());
  return t;
}

}  // namespace

TEST_CASE("fog distance") {
  FogParams p = FogParams::make(kFogLight, 64, 64);
  CHECK(p.center_i == 31.5);
  CHECK(p.center_j == 31.5);

  // the distance term vanishes at the center: d = sqrt(64) = 8
  CHECK(fog_distance(p.center_i, p.center_j, p) == 8.0);
  // 10 pixels off along a row: d = 8 - 0.4
  CHECK(fog_distance(p.center_i, p.center_j + 10, p) == doctest::Approx(7.6).epsilon(1e-15));

  // maximal at the center, strictly decreasing with radius
  double prev = fog_distance(p.center_i, p.center_j, p);
  for (double r = 1; p.center_j + r < 64; r += 1) {
    const double d = fog_distance(p.center_i, p.center_j + r, p);
    CHECK(d < prev);
    prev = d;
  }

  CHECK_THROWS_AS(fog_distance(-1, 0, p), std::invalid_argument);
  CHECK_THROWS_AS(fog_distance(0, 64, p), std::invalid_argument);
}

TEST_CASE("transmission against a long double oracle") {
  CHECK(transmission(0.0, 3.7) == 1.0);
  CHECK(transmission(0.0, -2.0) == 1.0);

  const double light = transmission(0.08, 8.0);
  CHECK(std::abs(light - static_cast<double>(expl(-0.64L))) < 1e-12);
  CHECK(light == doctest::Approx(0.5273).epsilon(1e-4));

  const double heavy = transmission(0.24, 8.0);
  CHECK(std::abs(heavy - static_cast<double>(expl(-1.92L))) < 1e-12);
  CHECK(heavy == doctest::Approx(0.1466).epsilon(1e-3));

  // decreasing in beta for positive distance
  CHECK(transmission(0.16, 8.0) < light);
  CHECK(heavy < transmission(0.16, 8.0));

  CHECK_THROWS_AS(transmission(-0.1, 1.0), std::invalid_argument);
}

TEST_CASE("apply_fog fixed point and identity") {
  Tensor<float> airlight = Tensor<float>::filled({1, 64, 64}, 0.5f);
  FogResult fixed = apply_fog(airlight, FogParams::make(kFogHeavy, 64, 64));
  CHECK(fixed.image.data() == airlight.data());

  Tensor<float> img = random_image(64, 64, 1);
  FogResult same = apply_fog(img, FogParams::make(0.0, 64, 64));
  CHECK(same.image.data() == img.data());
  CHECK(same.clamp_count() == 0);
}

TEST_CASE("apply_fog center value oracle") {
  // V=1 at the exact row through the center: t_d there is e^{-0.64}
  Tensor<float> img = Tensor<float>::filled({1, 64, 64}, 0.0f);
  // fractional center means the nearest pixel sits at radius sqrt(0.5)
  FogParams p = FogParams::make(kFogLight, 64, 64);
  img.data()[31 * 64 + 31] = 1.0f;
  FogResult fogged = apply_fog(img, p);
  const double d = fog_distance(31, 31, p);
  const double t = transmission(kFogLight, d);
  const double expected = 1.0 * t + 0.5 * (1.0 - t);
  CHECK(fogged.image.data()[31 * 64 + 31] == doctest::Approx(expected).epsilon(1e-7));
  CHECK(expected == doctest::Approx(0.7636).epsilon(2e-3));
}

TEST_CASE("fog contraction toward airlight") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Tensor<float> img = random_image(32, 32, seed);
    FogParams light = FogParams::make(kFogLight, 32, 32);
    FogParams heavy = FogParams::make(kFogHeavy, 32, 32);
    Tensor<float> a = apply_fog(img, light).image;
    Tensor<float> b = apply_fog(img, heavy).image;
    for (size_t i = 0; i < img.data().size(); ++i) {
      const double orig = std::abs(img.data()[i] - 0.5);
      const double la = std::abs(a.data()[i] - 0.5);
      const double lb = std::abs(b.data()[i] - 0.5);
      CHECK(la <= orig + 1e-7);
      CHECK(lb <= la + 1e-7);  // non-increasing in beta
      CHECK(a.data()[i] >= 0.0f);
      CHECK(a.data()[i] <= 1.0f);
    }
  }
}

TEST_CASE("apply_fog is pure and validates inputs") {
  Tensor<float> img = random_image(16, 16, 42);
  FogParams p = FogParams::make(kFogMedium, 16, 16);
  CHECK(apply_fog(img, p).image.data() == apply_fog(img, p).image.data());

  Tensor<float> bad = img.clone_values();
  bad.data()[7] = 1.5f;
  CHECK_THROWS_WITH_AS(apply_fog(bad, p), doctest::Contains("normalized"),
                       std::invalid_argument);

  CHECK_THROWS_AS(apply_fog(img, FogParams::make(0.1, 8, 8)), std::invalid_argument);
}

TEST_CASE("multi-channel images are processed per channel") {
  Rng rng(9);
  Tensor<float> rgb = Tensor<float>::zeros({3, 16, 16});
  for (float& v : rgb.data()) v = static_cast<float>(rng.uniform01());
  FogParams p = FogParams::make(kFogMedium, 16, 16);
  Tensor<float> fogged = apply_fog(rgb, p).image;
  for (int64_t c = 0; c < 3; ++c) {
    Tensor<float> chan = Tensor<float>::zeros({1, 16, 16});
    for (int64_t i = 0; i < 256; ++i) chan.data()[i] = rgb.data()[c * 256 + i];
    Tensor<float> alone = apply_fog(chan, p).image;
    for (int64_t i = 0; i < 256; ++i) CHECK(alone.data()[i] == fogged.data()[c * 256 + i]);
  }
}
