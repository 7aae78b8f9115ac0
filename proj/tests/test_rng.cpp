#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "absope/rng.hpp"

using absope::Philox4x32;

TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                     {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPiDigits) {
  const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                     {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(KeyedUniforms, DeterministicAndOpenInterval) {
  for (std::uint32_t step = 0; step < 1000; ++step) {
    const auto u = absope::keyed_uniforms(42, 7, step, 0);
    EXPECT_EQ(u, absope::keyed_uniforms(42, 7, step, 0));
    for (double x : u) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
  }
  EXPECT_NE(absope::keyed_uniforms(42, 7, 3, 0), absope::keyed_uniforms(42, 7, 3, 1));
  EXPECT_NE(absope::keyed_uniforms(42, 7, 3, 0), absope::keyed_uniforms(43, 7, 3, 0));
}

TEST(RandomStream, ReproducibleAndStreamSeparated) {
  absope::RandomStream a(5, 1), b(5, 1), c(5, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u32();
    EXPECT_EQ(x, b.next_u32());
    differs = differs || x != c.next_u32();
  }
  EXPECT_TRUE(differs);
}

TEST(RandomStream, NormalMoments) {
  absope::RandomStream rng(9);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(RandomStream, GammaMean) {
  absope::RandomStream rng(10);
  for (double shape : {0.3, 1.0, 4.5}) {
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
    // Var = shape, so the mean's standard error is sqrt(shape / n).
    EXPECT_NEAR(sum / n, shape, 5.0 * std::sqrt(shape / n)) << "shape " << shape;
  }
}

TEST(RandomStream, DirichletOnSimplex) {
  absope::RandomStream rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto p = rng.dirichlet(5, 0.5);
    double total = 0.0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SampleCategorical, FrequenciesMatchWeights) {
  const std::vector<double> w{0.2, 0.0, 0.5, 0.3};
  std::vector<double> counts(4, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    counts[absope::sample_categorical(w, absope::keyed_uniforms(1, i, 0, 0)[0])] += 1.0;
  EXPECT_EQ(counts[1], 0.0);
  for (std::size_t k = 0; k < w.size(); ++k)
    EXPECT_NEAR(counts[k] / n, w[k], 4.0 * std::sqrt(w[k] * (1 - w[k]) / n) + 1e-12);
}

TEST(DeriveSeed, DistinctForDistinctInputs) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(absope::derive_seed({a, b}));
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(absope::derive_seed({1, 2}), absope::derive_seed({1, 2}));
}
