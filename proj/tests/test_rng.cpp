#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lore/rng.hpp"
#include "lore/synth.hpp"

using namespace lore;

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, DerivedStreamsAreDistinct) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 200; ++i) firsts.insert(Rng::derive(7, "user-weights", i).next());
  firsts.insert(Rng::derive(7, "items").next());
  firsts.insert(Rng::derive(7, "true-basis").next());
  EXPECT_EQ(firsts.size(), 202u);
  EXPECT_EQ(Rng::derive(7, "items").next(), Rng::derive(7, "items").next());
}

TEST(Rng, Splitmix64KnownValue) {
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64(s), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(99);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, BelowIsInRangeAndCoversValues) {
  Rng rng(4);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.below(7)];
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, GammaMean) {
  Rng rng(5);
  for (double shape : {0.5, 1.0, 3.0}) {
    double s = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += rng.gamma(shape);
    EXPECT_NEAR(s / n, shape, 0.03 * std::max(1.0, shape));
  }
}

TEST(Rng, TinyShapeLogGammaIsFinite) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(std::isfinite(rng.log_gamma_draw(0.001)));
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const auto idx = rng.sample_without_replacement(20, 9);
    EXPECT_EQ(idx.size(), 9u);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 9u);
    for (auto i : idx) EXPECT_LT(i, 20u);
  }
}

TEST(SampleDirichlet, OnSimplexAndConcentratedForSmallAlpha) {
  Rng rng(10);
  int near_vertex = 0;
  for (int t = 0; t < 500; ++t) {
    const auto w = sample_dirichlet(0.001, 5, rng);
    EXPECT_TRUE(on_simplex(w.values()));
    double mx = 0;
    for (double v : w.values()) mx = std::max(mx, v);
    near_vertex += mx > 0.99;
  }
  EXPECT_GT(near_vertex, 450);
}

TEST(SampleDirichlet, MeanIsUniformForModerateAlpha) {
  Rng rng(11);
  Vector acc(4, 0.0);
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    const auto w = sample_dirichlet(2.0, 4, rng);
    for (std::size_t i = 0; i < 4; ++i) acc[i] += w[i];
  }
  for (double v : acc) EXPECT_NEAR(v / n, 0.25, 0.01);
  EXPECT_THROW(sample_dirichlet(0.0, 3, rng), DataError);
}
