#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lore/math.hpp"
#include "lore/optimizer.hpp"
#include "lore/rng.hpp"
#include "oracles.hpp"

using namespace lore;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.normal();
  return m;
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

Vector random_simplex(std::size_t n, Rng& rng) {
  Vector v(n);
  double s = 0.0;
  for (double& x : v) s += (x = rng.uniform01() + 1e-3);
  for (double& x : v) x /= s;
  return v;
}

oracle::Mat to_rows(const Matrix& m) {
  oracle::Mat out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

}  // namespace

TEST(BasisRewards, IdentityAndZero) {
  const RewardBasisModel id(Matrix::identity(2));
  EXPECT_EQ(basis_rewards(id, {0.5, -1.0}), (Vector{0.5, -1.0}));
  const RewardBasisModel zero(Matrix(2, 3));
  EXPECT_EQ(basis_rewards(zero, {1.0, 2.0, 3.0}), (Vector{0.0, 0.0}));
  EXPECT_THROW(basis_rewards(id, {1.0, 2.0, 3.0}), DimensionError);
}

TEST(BasisRewards, MatchesNaiveDoubleLoop) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(3, 4, rng);
    const Vector e = random_vector(4, rng);
    const auto got = basis_rewards(RewardBasisModel(a), FeatureVector(e));
    const auto want = oracle::matvec(to_rows(a), e);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(PersonalizedReward, Cases) {
  const Vector r{1.0, 3.0, -2.0};
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(personalized_reward(UserWeights::one_hot(3, k), r), r[k]);
  EXPECT_DOUBLE_EQ(personalized_reward(UserWeights::uniform(2), Vector{1.0, 3.0}), 2.0);
  EXPECT_THROW(personalized_reward(UserWeights::uniform(2), r), DimensionError);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Vector w = random_simplex(6, rng);
    const Vector rr = random_vector(6, rng);
    EXPECT_NEAR(personalized_reward(UserWeights(w), rr), oracle::weighted_sum(w, rr), 1e-12);
  }
}

TEST(PersonalizedReward, PermutationInvariant) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const Vector w = random_simplex(5, rng);
    const Vector r = random_vector(5, rng);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Vector pw(5), pr(5);
    for (std::size_t i = 0; i < 5; ++i) pw[i] = w[perm[i]], pr[i] = r[perm[i]];
    EXPECT_NEAR(personalized_reward(UserWeights(pw), pr), personalized_reward(UserWeights(w), r), 1e-12);
  }
}

TEST(BtProbability, ClosedForms) {
  EXPECT_EQ(bt_probability(0.0), 0.5);
  EXPECT_NEAR(bt_probability(std::log(3.0)), 0.75, 1e-15);
  const double tiny = bt_probability(-1e4);
  EXPECT_TRUE(std::isfinite(tiny));
  EXPECT_GE(tiny, 0.0);
  EXPECT_LE(tiny, 1e-300);
  EXPECT_EQ(bt_probability(1e4), 1.0);
  EXPECT_THROW(bt_probability(std::nan("")), DataError);
}

TEST(BtProbability, Complementary) {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const double d = (rng.uniform01() - 0.5) * 2e4 * std::pow(rng.uniform01(), 4);
    EXPECT_NEAR(bt_probability(d) + bt_probability(-d), 1.0, 1e-12);
  }
}

TEST(LogisticLoss, ClosedFormsAndAsymptote) {
  EXPECT_NEAR(logistic_loss(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(logistic_loss(-1000.0), 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(logistic_loss(-1e4)));
  EXPECT_GE(logistic_loss(1e4), 0.0);
  for (double z : {-50.0, -1.0, 0.3, 7.0, 40.0}) EXPECT_NEAR(logistic_loss(-z), z + logistic_loss(z), 1e-9);
  for (double z : {-5.0, -0.5, 0.0, 0.5, 5.0}) EXPECT_NEAR(logistic_loss(z), oracle::naive_logistic(z), 1e-14);
  EXPECT_THROW(logistic_loss(INFINITY), DataError);
}

TEST(LogisticLoss, Convex) {
  Rng rng(2);
  for (int t = 0; t < 2000; ++t) {
    const double z1 = (rng.uniform01() - 0.5) * 200.0;
    const double z2 = (rng.uniform01() - 0.5) * 200.0;
    EXPECT_LE(logistic_loss((z1 + z2) / 2), (logistic_loss(z1) + logistic_loss(z2)) / 2 + 1e-12);
  }
}

TEST(LogisticLoss, StableOverStressRange) {
  for (double z = -1e4; z <= 1e4; z += 7.3) {
    EXPECT_TRUE(std::isfinite(logistic_loss(z)));
    EXPECT_TRUE(std::isfinite(logistic_loss_slope(z)));
    EXPECT_TRUE(std::isfinite(bt_probability(z)));
  }
}

TEST(LossAndGradient, IdenticalItemsGiveLn2AndZeroGradient) {
  Rng rng(4);
  const RewardBasisModel m(random_matrix(3, 5, rng));
  const FeatureVector e(random_vector(5, rng));
  const auto g = loss_and_gradient(m, UserWeights::uniform(3), ComparisonRecord{"u", e, e});
  EXPECT_NEAR(g.loss, std::log(2.0), 1e-15);
  for (double v : g.grad_basis.flat()) EXPECT_EQ(v, 0.0);
  for (double v : g.grad_weights) EXPECT_EQ(v, 0.0);
}

TEST(LossAndGradient, MatchesFiniteDifferences) {
  Rng rng(42);
  const double h = 1e-6;
  for (int t = 0; t < 50; ++t) {
    const Matrix a = random_matrix(3, 5, rng);
    const Vector w = random_simplex(3, rng);
    const Vector d = random_vector(5, rng);
    const auto g = loss_and_gradient(a, w, d);
    auto f_of_a = [&](const oracle::Vec& flat) {
      oracle::Mat rows(3, oracle::Vec(5));
      for (std::size_t i = 0; i < 15; ++i) rows[i / 5][i % 5] = flat[i];
      return oracle::naive_logistic(oracle::weighted_sum(w, oracle::matvec(rows, d)));
    };
    auto f_of_w = [&](const oracle::Vec& ww) {
      return oracle::naive_logistic(oracle::weighted_sum(ww, oracle::matvec(to_rows(a), d)));
    };
    const auto fa = oracle::fd_gradient(f_of_a, oracle::Vec(a.flat().begin(), a.flat().end()), h);
    const auto fw = oracle::fd_gradient(f_of_w, w, h);
    for (std::size_t i = 0; i < 15; ++i) EXPECT_LE(oracle::rel_err(g.grad_basis.flat()[i], fa[i]), 1e-6) << i;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(oracle::rel_err(g.grad_weights[i], fw[i]), 1e-6) << i;
  }
}

TEST(LossAndGradient, ScalingBasisScalesMargin) {
  Rng rng(9);
  Matrix a = random_matrix(2, 4, rng);
  const Vector w{0.3, 0.7};
  Vector d = random_vector(4, rng);
  double z = loss_and_gradient(a, w, d).margin;
  if (z < 0)
    for (double& v : d) v = -v;
  z = std::abs(z);
  double prev = INFINITY;
  for (double c : {0.5, 1.0, 2.0, 4.0}) {
    Matrix ac = a;
    for (double& v : ac.flat()) v *= c;
    const auto g = loss_and_gradient(ac, w, d);
    EXPECT_NEAR(g.margin, c * z, 1e-12 * c);
    EXPECT_LT(g.loss, prev);
    prev = g.loss;
  }
}

TEST(LossAndGradient, DimensionErrors) {
  const RewardBasisModel m(Matrix(2, 3));
  EXPECT_THROW(loss_and_gradient(m, UserWeights::uniform(2), ComparisonRecord{"u", {1.0, 2.0}, {1.0, 2.0}}),
               DimensionError);
  EXPECT_THROW(loss_and_gradient(m, UserWeights::uniform(3), ComparisonRecord{"u", {1, 2, 3}, {1, 2, 3}}),
               DimensionError);
}
