#include <cmath>

#include "doctest.h"
#include "skimlab/encoder.hpp"
#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

using namespace skimlab;

TEST_CASE("full mode normalizes, identity on unit input") {
  EncoderSpec spec;
  Embedding unit = {0.6, 0.8, 0.0};
  Embedding out = embed(spec, unit);
  CHECK(out[0] == doctest::Approx(0.6));
  CHECK(out[1] == doctest::Approx(0.8));
  CHECK(l2_norm(out) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked mode zeroes unmasked dims then normalizes") {
  EncoderSpec spec;
  spec.mode = EncoderMode::kMasked;
  spec.mask = {1, 1, 0, 0};
  Embedding out = embed(spec, {3.0, 4.0, 12.0, 5.0});
  CHECK(out[0] == doctest::Approx(0.6));
  CHECK(out[1] == doctest::Approx(0.8));
  CHECK(out[2] == 0.0);
  CHECK(out[3] == 0.0);

  // full mask equals full mode
  EncoderSpec all;
  all.mode = EncoderMode::kMasked;
  all.mask = {1, 1, 1, 1};
  Embedding a = embed(all, {3.0, 4.0, 12.0, 5.0});
  Embedding b = embed(EncoderSpec{}, {3.0, 4.0, 12.0, 5.0});
  for (int i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(b[i]));
}

TEST_CASE("masked mode error paths") {
  EncoderSpec spec;
  spec.mode = EncoderMode::kMasked;
  spec.mask = {0, 0};
  CHECK_THROWS_AS(embed(spec, {1.0, 2.0}), ArgumentError);
  spec.mask = {1};
  CHECK_THROWS_AS(embed(spec, {1.0, 2.0}), ArgumentError);
  spec.mask = {0, 1};
  CHECK_THROWS_AS(embed(spec, {1.0, 0.0}), DegenerateEmbeddingError);
}

TEST_CASE("surface_only behaves as full") {
  EncoderSpec spec;
  spec.mode = EncoderMode::kSurfaceOnly;
  Embedding a = embed(spec, {1.0, 2.0, 2.0});
  Embedding b = embed(EncoderSpec{}, {1.0, 2.0, 2.0});
  for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("cosine01 endpoints") {
  Embedding a = {1.0, 0.0};
  Embedding b = {0.0, 1.0};
  Embedding na = {-1.0, 0.0};
  CHECK(cosine01(a, a) == doctest::Approx(1.0));
  CHECK(cosine01(a, b) == doctest::Approx(0.5));
  CHECK(cosine01(a, na) == doctest::Approx(0.0));
  CHECK_THROWS_AS(cosine01(a, Embedding{0.0, 0.0}), DegenerateEmbeddingError);
  CHECK_THROWS_AS(cosine01(a, Embedding{1.0, 0.0, 0.0}), ArgumentError);
}

TEST_CASE("cosine01 is symmetric on random inputs") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    Embedding a(8), b(8);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    double ab = cosine01(a, b);
    CHECK(ab == doctest::Approx(cosine01(b, a)).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("masking is a projection: applying twice equals once") {
  Rng rng(3);
  EncoderSpec spec;
  spec.mode = EncoderMode::kMasked;
  spec.mask = {1, 0, 1, 0, 1, 0, 1, 0};
  for (int t = 0; t < 50; ++t) {
    Embedding v(8);
    for (auto& x : v) x = rng.normal() + 0.1;
    Embedding once = embed(spec, v);
    Embedding twice = embed(spec, once);
    for (int i = 0; i < 8; ++i) CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-9));
  }
}
