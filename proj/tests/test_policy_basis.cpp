#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "lore/policy_basis.hpp"
#include "oracles.hpp"

using namespace lore;

namespace {

oracle::Mat rows_of(const Matrix& m) {
  oracle::Mat out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

Matrix random_ref(std::size_t np, std::size_t nr, Rng& rng) {
  Matrix l(np, nr);
  for (double& v : l.flat()) v = rng.normal();
  return softmax_rows(l);
}

}  // namespace

TEST(TabularItem, RoundTrip) {
  const auto e = tabular_item(3, 4, 2, 1);
  EXPECT_EQ(e.size(), 12u);
  EXPECT_EQ(e[9], 1.0);
  const auto d = decode_tabular_item(e, 4);
  EXPECT_EQ(d.prompt, 2u);
  EXPECT_EQ(d.response, 1u);
  EXPECT_THROW(decode_tabular_record({"u", tabular_item(3, 4, 0, 1), tabular_item(3, 4, 1, 1)}, 3, 4), DataError);
}

TEST(KlOptimum, HandEnumeratedRow) {
  Matrix r(1, 3);
  r(0, 1) = std::log(2.0);
  r(0, 2) = std::log(4.0);
  const auto p = kl_regularized_optimum(r, uniform_policy(1, 3), 1.0);
  EXPECT_NEAR(p(0, 0), 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 2.0 / 7.0, 1e-15);
  EXPECT_NEAR(p(0, 2), 4.0 / 7.0, 1e-15);
}

TEST(KlOptimum, ConstantRewardAndLargeBeta) {
  Rng rng(1);
  const Matrix ref = random_ref(3, 4, rng);
  Matrix c(3, 4);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 4; ++y) c(x, y) = 2.0 * x - 1.0;
  const auto p = kl_regularized_optimum(c, ref, 0.7);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p.flat()[i], ref.flat()[i], 1e-15);
  Matrix r(3, 4);
  for (double& v : r.flat()) v = rng.normal();
  const auto q = kl_regularized_optimum(r, ref, 1e6);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_LT(std::abs(q.flat()[i] - ref.flat()[i]), 1e-4);
  EXPECT_THROW(kl_regularized_optimum(r, ref, 0.0), DataError);
  EXPECT_THROW(kl_regularized_optimum(Matrix(2, 4), ref, 1.0), DimensionError);
}

TEST(KlOptimum, MatchesEnumerationOracleAndRoundTrips) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const std::size_t np = 1 + rng.below(5), nr = 2 + rng.below(5);
    const double beta = 0.2 + 2.0 * rng.uniform01();
    const Matrix ref = random_ref(np, nr, rng);
    Matrix r(np, nr);
    for (double& v : r.flat()) v = rng.normal();
    const Matrix p = kl_regularized_optimum(r, ref, beta);
    const auto want = oracle::kl_optimum_by_enumeration(rows_of(r), rows_of(ref), beta);
    for (std::size_t x = 0; x < np; ++x)
      for (std::size_t y = 0; y < nr; ++y) EXPECT_NEAR(p(x, y), want[x][y], 1e-10);
    Matrix logits(np, nr);
    for (std::size_t i = 0; i < p.size(); ++i) logits.flat()[i] = std::log(p.flat()[i]);
    const TabularPolicySet set(ref, {logits}, beta);
    for (std::size_t x = 0; x < np; ++x)
      for (std::size_t y = 0; y < nr; ++y)
        for (std::size_t z = 0; z < nr; ++z)
          EXPECT_NEAR(implied_reward_diff(set, 0, x, y, z), r(x, y) - r(x, z), 1e-10);
  }
}

TEST(ImpliedRewardDiff, ReferencePolicyGivesZero) {
  Rng rng(3);
  const Matrix ref = random_ref(2, 3, rng);
  Matrix logits(2, 3);
  for (std::size_t i = 0; i < ref.size(); ++i) logits.flat()[i] = std::log(ref.flat()[i]);
  const TabularPolicySet set(ref, {logits}, 1.0);
  for (std::size_t y = 0; y < 3; ++y) {
    EXPECT_NEAR(implied_reward_diff(set, 0, 1, y, 0), 0.0, 1e-12);
    EXPECT_EQ(implied_reward_diff(set, 0, 1, y, y), 0.0);
  }
  EXPECT_THROW(implied_reward_diff(set, 1, 0, 0, 1), DimensionError);
}

TEST(TabularPolicySet, RejectsInvalid) {
  EXPECT_THROW(TabularPolicySet(uniform_policy(1, 2), {Matrix(1, 2)}, 0.0), DataError);
  Matrix bad(1, 2, 0.7);
  EXPECT_THROW(TabularPolicySet(bad, {Matrix(1, 2)}, 1.0), DataError);
  EXPECT_THROW(TabularPolicySet(uniform_policy(1, 2), {Matrix(2, 2)}, 1.0), DimensionError);
}

TEST(TrainPolicyBasis, ZeroDataKeepsInitialization) {
  PolicyConfig c;
  c.init_noise = 0.0;
  const Matrix ref = uniform_policy(2, 3);
  const auto res = train_policy_basis(PreferenceDataset(6, {}), ref, c);
  for (std::size_t j = 0; j < c.rank; ++j) {
    const Matrix p = res.policies.policy(j);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p.flat()[i], ref.flat()[i], 1e-15);
  }
}

TEST(TrainPolicyBasis, TwoGroupsSeparate) {
  const auto data = fixture::two_groups();
  PolicyConfig c;
  const auto res = train_policy_basis(data, uniform_policy(1, 2), c);
  double correct = 0;
  std::size_t group_a = 2, group_b = 2;
  for (const auto& [u, w] : res.weights) {
    correct += policy_accuracy(res.policies, w, data.select(data.records_of(u)));
    const std::size_t top = w[0] >= 0.8 ? 0 : (w[1] >= 0.8 ? 1 : 2);
    EXPECT_LT(top, 2u) << u;
    (u[0] == 'a' ? group_a : group_b) = top;
  }
  EXPECT_GE(correct / res.weights.size(), 0.95);
  EXPECT_NE(group_a, group_b);
  for (std::size_t j = 0; j < 2; ++j) {
    const Matrix p = res.policies.policy(j);
    EXPECT_NEAR(p(0, 0) + p(0, 1), 1.0, 1e-12);
  }
}

TEST(TrainPolicyBasis, RankOneMatchesSinglePolicyDpo) {
  const auto inst = make_tabular_instance({.seed = 4, .n_users = 1, .n_unseen = 1});
  const auto train = inst.data.subset(inst.split.train_positions(inst.split.seen_users));
  PolicyConfig c;
  c.rank = 1;
  const auto res = train_policy_basis(train, uniform_policy(5, 6), c);
  WeightTable one{{"s00000", UserWeights::uniform(1)}};
  double dpo = 0.0;
  for (const auto& rec : train.records()) {
    const auto cmp = decode_tabular_record(rec, 5, 6);
    dpo += logistic_loss(implied_reward_diff(res.policies, 0, cmp.prompt, cmp.chosen, cmp.rejected));
  }
  EXPECT_NEAR(policy_basis_objective(res.policies, one, train), dpo / train.size(), 1e-12);
}

TEST(FewshotPolicyWeights, FrozenBasisAndOracleAgreement) {
  const auto data = fixture::two_groups(5, 10);
  const auto res = train_policy_basis(data, uniform_policy(1, 2), PolicyConfig{});
  const TabularPolicySet before = res.policies;
  PreferenceDataset::Builder b(2);
  for (int k = 0; k < 30; ++k) b.add("new", tabular_item(1, 2, 0, 1), tabular_item(1, 2, 0, 0));
  const auto recs = std::move(b).build();
  const auto w = fewshot_policy_weights(res.policies, recs.records());
  EXPECT_EQ(res.policies, before);
  const auto f = [&](const oracle::Vec& ww) { return fewshot_policy_objective(res.policies, recs.records(), ww); };
  const auto best = oracle::grid_search_simplex2(f);
  EXPECT_LE(fewshot_policy_objective(res.policies, recs.records(), w.values()), best.value + 0.02);
  EXPECT_GE(std::max(w[0], w[1]), 0.9);
  const auto w_eq9 = fewshot_adapt(as_reward_basis(res.policies), recs.records());
  EXPECT_NEAR(fewshot_policy_objective(res.policies, recs.records(), w_eq9.values()),
              fewshot_policy_objective(res.policies, recs.records(), w.values()), 0.02);
  const auto u = fewshot_policy_weights(res.policies, {});
  EXPECT_EQ(fixture::vec(u.values()), (Vector{0.5, 0.5}));
}
