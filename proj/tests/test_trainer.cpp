#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "lore/evaluation.hpp"
#include "lore/trainer.hpp"
#include "oracles.hpp"

using namespace lore;

namespace {

JointConfig quick(std::size_t rank, std::uint64_t seed = 3) {
  JointConfig c;
  c.rank = rank;
  c.seed = seed;
  c.epochs = 150;
  return c;
}

}  // namespace

TEST(InitBasis, ScaleAndDeterminism) {
  const Matrix a = init_basis(50, 100, 9);
  EXPECT_EQ(a, init_basis(50, 100, 9));
  EXPECT_FALSE(a == init_basis(50, 100, 10));
  double s2 = 0;
  for (double v : a.flat()) s2 += v * v;
  EXPECT_NEAR(s2 / a.size(), 1.0 / 100.0, 0.001);
}

TEST(JointObjective, MatchesNaiveSum) {
  const auto bench = build_benchmark(fixture::small_generator(2));
  const auto train = bench.data.subset(bench.split.train_positions(bench.split.seen_users));
  const RewardBasisModel model(init_basis(3, 8, 1));
  WeightTable w;
  Rng rng(4);
  for (const auto& u : bench.split.seen_users) w.emplace(u, sample_dirichlet(1.0, 3, rng));
  double want = 0.0;
  for (const auto& [u, positions] : train.user_index()) {
    double s = 0.0;
    for (auto p : positions) {
      Vector d = feature_difference(train[p]);
      oracle::Mat rows;
      for (std::size_t r = 0; r < 3; ++r) rows.emplace_back(model.basis().row(r).begin(), model.basis().row(r).end());
      s += oracle::naive_logistic(oracle::weighted_sum(fixture::vec(w.at(u).values()), oracle::matvec(rows, d)));
    }
    want += s / positions.size();
  }
  EXPECT_NEAR(joint_objective(model, w, train), want, 1e-10);
}

TEST(JointObjective, MissingWeightsOrRecordsThrow) {
  const auto bench = build_benchmark(fixture::small_generator(2));
  const auto train = bench.data.subset(bench.split.train_positions(bench.split.seen_users));
  const RewardBasisModel model(init_basis(2, 8, 1));
  EXPECT_THROW(joint_objective(model, {}, train), DataError);
  WeightTable w;
  for (const auto& u : bench.split.seen_users) w.emplace(u, UserWeights::uniform(2));
  w.emplace("ghost", UserWeights::uniform(2));
  EXPECT_THROW(joint_objective(model, w, train), DataError);
}

TEST(TrainJoint, ObjectiveDecreasesAndFits) {
  const auto bench = build_benchmark(fixture::small_generator(5));
  const auto tm = train_joint(bench.data, bench.split, quick(2));
  const auto& obj = tm.telemetry.objective;
  ASSERT_GE(obj.size(), 2u);
  EXPECT_LT(obj.back(), 0.5 * obj.front());
  for (std::size_t i = 1; i < obj.size(); ++i) EXPECT_LE(tm.telemetry.best[i], tm.telemetry.best[i - 1]);
  EXPECT_EQ(tm.seen_weights.size(), bench.split.seen_users.size());
  const auto train = bench.data.subset(bench.split.train_positions(bench.split.seen_users));
  EXPECT_NEAR(joint_objective(tm.model, tm.seen_weights, train), obj.back(), 0.5 * obj.back());
}

TEST(TrainJoint, DeterministicForFixedSeed) {
  const auto bench = build_benchmark(fixture::small_generator(6));
  const auto a = train_joint(bench.data, bench.split, quick(2, 11));
  const auto b = train_joint(bench.data, bench.split, quick(2, 11));
  EXPECT_EQ(a.model.basis(), b.model.basis());
  for (const auto& [u, w] : a.seen_weights) EXPECT_EQ(fixture::vec(w.values()), fixture::vec(b.seen_weights.at(u).values()));
  EXPECT_EQ(a.telemetry.objective, b.telemetry.objective);
}

TEST(TrainJoint, SeparableUserReachesHighAccuracy) {
  GeneratorConfig g = fixture::small_generator(7);
  g.n_seen = 1;
  g.basis_true = 1;
  const auto bench = build_benchmark(g);
  JointConfig c = quick(1);
  c.epochs = 500;
  const auto tm = train_joint(bench.data, bench.split, c);
  const auto user = *bench.split.seen_users.begin();
  const auto train = bench.data.select(bench.split.partition(user).train);
  EXPECT_EQ(pairwise_accuracy(tm.model, tm.seen_weights.at(user), train), 1.0);
}

TEST(TrainJoint, ObserverSeesSimplexWeightsEveryEpoch) {
  const auto bench = build_benchmark(fixture::small_generator(8));
  std::size_t calls = 0;
  const auto tm = train_joint(bench.data, bench.split, quick(3), std::nullopt, [&](const EpochView& v) {
    EXPECT_EQ(v.epoch, calls);
    ++calls;
    for (const auto& w : v.weights) EXPECT_TRUE(on_simplex(w, 1e-9));
  });
  EXPECT_EQ(calls, tm.telemetry.epochs_run);
}

TEST(TrainJoint, MiniBatchIsDeterministic) {
  const auto bench = build_benchmark(fixture::small_generator(9));
  JointConfig c = quick(2);
  c.batch_size = 16;
  c.epochs = 30;
  const auto a = train_joint(bench.data, bench.split, c);
  const auto b = train_joint(bench.data, bench.split, c);
  EXPECT_EQ(a.model.basis(), b.model.basis());
  EXPECT_LT(a.telemetry.objective.back(), a.telemetry.objective.front());
}

TEST(TrainJoint, ConvergesEarlyOnDegenerateData) {
  PreferenceDataset::Builder b(2);
  b.add("s", {1.0, 0.0}, {1.0, 0.0});
  const auto data = std::move(b).build();
  SplitSpec split;
  split.seen_users = {"s"};
  split.partitions["s"] = {{0}, {}};
  JointConfig c = quick(1);
  const auto tm = train_joint(data, split, c);
  EXPECT_TRUE(tm.telemetry.converged);
  EXPECT_EQ(tm.telemetry.epochs_run, 1u);
  EXPECT_NEAR(tm.telemetry.objective[0], std::log(2.0), 1e-15);
}

TEST(TrainJoint, RejectsBadInputs) {
  const auto bench = build_benchmark(fixture::small_generator(10));
  EXPECT_THROW(train_joint(bench.data, bench.split, quick(9)), DimensionError);
  EXPECT_THROW(train_joint(bench.data, bench.split, quick(0)), DataError);
  SplitSpec empty;
  EXPECT_THROW(train_joint(bench.data, empty, quick(2)), DataError);
}

TEST(TrainJoint, NonFiniteLossNamesEpochAndUser) {
  PreferenceDataset::Builder b(1);
  b.add("s", {1e308}, {-1e308});
  const auto data = std::move(b).build();
  SplitSpec split;
  split.seen_users = {"s"};
  split.partitions["s"] = {{0}, {}};
  try {
    train_joint(data, split, quick(1));
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'s'"), std::string::npos) << msg;
  }
}

TEST(FewshotAdapt, EmptyRecordsGiveUniform) {
  const RewardBasisModel m(init_basis(4, 6, 1));
  const auto w = fewshot_adapt(m, std::vector<ComparisonRecord>{});
  for (double v : w.values()) EXPECT_EQ(v, 0.25);
}

TEST(FewshotAdapt, RecoversActiveBasisRow) {
  // records explained only by basis row 1
  const RewardBasisModel m(Matrix::identity(3));
  std::vector<ComparisonRecord> recs;
  Rng rng(2);
  for (int i = 0; i < 30; ++i) {
    Vector c(3), r(3);
    for (auto& v : c) v = rng.normal();
    for (auto& v : r) v = rng.normal();
    if (c[1] < r[1]) std::swap(c, r);
    recs.push_back({"u", FeatureVector(c), FeatureVector(r)});
  }
  const auto w = fewshot_adapt(m, recs);
  EXPECT_GE(w[1], 0.9);
}

TEST(FewshotAdapt, MatchesGridSearchOracle) {
  Rng rng(31);
  for (int t = 0; t < 5; ++t) {
    Matrix a(2, 4);
    for (double& v : a.flat()) v = rng.normal();
    const RewardBasisModel m(a);
    std::vector<ComparisonRecord> recs;
    for (int i = 0; i < 9; ++i) {
      Vector c(4), r(4);
      for (auto& v : c) v = rng.normal();
      for (auto& v : r) v = rng.normal();
      recs.push_back({"u", FeatureVector(c), FeatureVector(r)});
    }
    const auto w = fewshot_adapt(m, recs);
    const auto f = [&](const oracle::Vec& ww) { return fewshot_objective(m, recs, ww); };
    const auto best = oracle::grid_search_simplex2(f);
    EXPECT_LE(fewshot_objective(m, recs, w.values()), best.value + 0.02);
  }
}

TEST(FewshotAdapt, BasisIsUntouched) {
  const auto bench = build_benchmark(fixture::small_generator(12));
  const RewardBasisModel m(init_basis(2, 8, 3));
  const Matrix before = m.basis();
  adapt_unseen_users(m, bench.data, bench.split);
  EXPECT_EQ(m.basis(), before);
}
