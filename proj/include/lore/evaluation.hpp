#pragma once

// Pairwise accuracy, seen/unseen/overall reports, few-shot curves, rank
// selection by held-out validation and parameter accounting.
//
// Aggregation: a group's accuracy is the unweighted mean of its users'
// accuracies; "overall" is the unweighted mean of the seen and unseen group
// accuracies. Ties (zero reward difference) count as incorrect.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lore/math.hpp"
#include "lore/parallel.hpp"
#include "lore/rng.hpp"
#include "lore/trainer.hpp"
#include "lore/types.hpp"

namespace lore {

/// Fraction of records with w^T A (e_c - e_r) > 0.
inline double pairwise_accuracy(const RewardBasisModel& model, std::span<const double> w,
                                std::span<const ComparisonRecord> records) {
  if (records.empty()) throw DataError("pairwise_accuracy: empty record list");
  if (w.size() != model.rank()) throw DimensionError("pairwise_accuracy: weight length vs rank");
  std::size_t correct = 0;
  for (const auto& rec : records) {
    if (rec.chosen.size() != model.dim() || rec.rejected.size() != model.dim())
      throw DimensionError("pairwise_accuracy: record dimension vs model");
    if (dot(w, mat_vec(model.basis(), feature_difference(rec))) > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

inline double pairwise_accuracy(const RewardBasisModel& model, const UserWeights& w,
                                std::span<const ComparisonRecord> records) {
  return pairwise_accuracy(model, w.values(), records);
}

/// Per-record predicted P(chosen > rejected) for one user.
inline Vector predicted_probabilities(const RewardBasisModel& model, const UserWeights& w,
                                      std::span<const ComparisonRecord> records) {
  Vector out;
  out.reserve(records.size());
  for (const auto& rec : records)
    out.push_back(bt_probability(dot(w.values(), mat_vec(model.basis(), feature_difference(rec)))));
  return out;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1); zero for fewer than two values.
inline double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

struct EvalReport {
  std::string method;
  std::map<std::string, double> per_user;
  std::optional<double> seen;
  std::optional<double> unseen;
  double overall = 0.0;
  std::size_t seen_users = 0;
  std::size_t unseen_users = 0;
  std::size_t seen_records = 0;
  std::size_t unseen_records = 0;
  std::string fingerprint;
};

/// Accuracy of every seen user on its test partition (jointly trained
/// weights) and of every unseen user on its test partition (few-shot
/// weights).
inline EvalReport evaluate_split(const RewardBasisModel& model, const WeightTable& seen_weights,
                                 const WeightTable& unseen_weights, const SplitSpec& split,
                                 const PreferenceDataset& data, std::string method = "lore",
                                 std::string fingerprint = {}) {
  EvalReport rep;
  rep.method = std::move(method);
  rep.fingerprint = std::move(fingerprint);
  auto run_group = [&](const std::set<std::string>& users, const WeightTable& table, std::size_t& n_users,
                       std::size_t& n_records) -> std::optional<double> {
    std::vector<double> accs;
    for (const auto& u : users) {
      const auto& test = split.partition(u).test;
      if (test.empty()) continue;
      auto it = table.find(u);
      if (it == table.end()) throw DataError("evaluate_split: missing weights for user '" + u + "'");
      const auto records = data.select(test);
      const double acc = pairwise_accuracy(model, it->second, records);
      rep.per_user[u] = acc;
      accs.push_back(acc);
      n_records += records.size();
    }
    n_users = accs.size();
    if (accs.empty()) return std::nullopt;
    return mean(accs);
  };
  rep.seen = run_group(split.seen_users, seen_weights, rep.seen_users, rep.seen_records);
  rep.unseen = run_group(split.unseen_users, unseen_weights, rep.unseen_users, rep.unseen_records);
  if (rep.seen && rep.unseen)
    rep.overall = (*rep.seen + *rep.unseen) / 2.0;
  else
    rep.overall = rep.seen ? *rep.seen : rep.unseen.value_or(0.0);
  return rep;
}

/// Evaluates one shared weight vector for every user (non-personalized
/// scorers, e.g. a rank-1 head with w = (1)).
inline EvalReport evaluate_shared(const RewardBasisModel& model, const UserWeights& w, const SplitSpec& split,
                                  const PreferenceDataset& data, std::string method, std::string fingerprint = {}) {
  WeightTable seen, unseen;
  for (const auto& u : split.seen_users) seen.emplace(u, w);
  for (const auto& u : split.unseen_users) unseen.emplace(u, w);
  return evaluate_split(model, seen, unseen, split, data, std::move(method), std::move(fingerprint));
}

// ---------------------------------------------------------------------------
// Few-shot curve

struct CurvePoint {
  std::size_t count;
  double mean;
  double std;
  std::vector<double> repeats;  // mean unseen accuracy of each repeat
};

/// For every count and repeat, each unseen user keeps `count` records drawn
/// without replacement from its few-shot pool (stream "curve" keyed by
/// count, repeat and user), adapts its weights with the basis frozen and is
/// scored on its test partition. A repeat's value is the mean over users.
inline std::vector<CurvePoint> fewshot_curve(const RewardBasisModel& model, const PreferenceDataset& data,
                                             const SplitSpec& split, const std::vector<std::size_t>& counts,
                                             std::size_t repeats, std::uint64_t seed,
                                             const FewShotConfig& config = {}) {
  if (repeats == 0) throw DataError("fewshot_curve: repeats must be >= 1");
  const std::vector<std::string> users(split.unseen_users.begin(), split.unseen_users.end());
  if (users.empty()) throw DataError("fewshot_curve: no unseen users");
  for (auto c : counts)
    for (const auto& u : users)
      if (c > split.partition(u).train.size())
        throw DataError("fewshot_curve: count " + std::to_string(c) + " exceeds the few-shot records of user '" + u +
                        "'");

  const std::size_t n_users = users.size();
  std::vector<double> acc(counts.size() * repeats * n_users, 0.0);
  parallel_for(acc.size(), [&](std::size_t job) {
    const std::size_t ci = job / (repeats * n_users);
    const std::size_t rep = (job / n_users) % repeats;
    const std::size_t ui = job % n_users;
    const auto& part = split.partition(users[ui]);
    Rng rng = Rng::derive(seed, "curve", mix64(counts[ci]) ^ mix64(rep + 0x1000) ^ mix64(ui + 0x100000000ULL));
    std::vector<std::size_t> chosen;
    for (auto k : rng.sample_without_replacement(part.train.size(), counts[ci])) chosen.push_back(part.train[k]);
    const auto few = data.select(chosen);
    const UserWeights w = fewshot_adapt(model, few, config);
    acc[job] = pairwise_accuracy(model, w, data.select(part.test));
  });

  std::vector<CurvePoint> out;
  for (std::size_t ci = 0; ci < counts.size(); ++ci) {
    CurvePoint pt{counts[ci], 0.0, 0.0, {}};
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      const std::size_t base = (ci * repeats + rep) * n_users;
      pt.repeats.push_back(mean(std::span<const double>(acc).subspan(base, n_users)));
    }
    pt.mean = mean(pt.repeats);
    pt.std = stddev(pt.repeats);
    out.push_back(std::move(pt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rank selection

struct RankSelection {
  std::size_t chosen = 0;
  std::vector<std::pair<std::size_t, double>> validation;  // (B, accuracy), ascending B
};

/// Holds out a fraction of every seen user's training records (stream
/// "rank-cv"), trains a joint model per candidate rank on the rest and
/// returns the rank with the highest validation accuracy. Accuracies within
/// 1e-12 count as tied; ties go to the smaller rank.
inline RankSelection select_rank(const PreferenceDataset& data, const SplitSpec& split,
                                 std::vector<std::size_t> candidates, double validation_fraction,
                                 const JointConfig& base_config) {
  if (candidates.empty()) throw DataError("select_rank: no candidate ranks");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.size() == 1) return {candidates[0], {}};
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw DataError("select_rank: validation fraction must be in (0, 1)");

  SplitSpec inner;
  inner.seen_users = split.seen_users;
  std::size_t user_index = 0;
  std::size_t n_validation = 0;
  for (const auto& u : split.seen_users) {
    auto positions = split.partition(u).train;
    Rng rng = Rng::derive(base_config.seed, "rank-cv", user_index++);
    rng.shuffle(positions);
    auto hold = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(positions.size())));
    hold = std::min(hold, positions.size() > 0 ? positions.size() - 1 : 0);
    SplitSpec::Partition p;
    p.test.assign(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(hold));
    p.train.assign(positions.begin() + static_cast<std::ptrdiff_t>(hold), positions.end());
    std::sort(p.train.begin(), p.train.end());
    std::sort(p.test.begin(), p.test.end());
    n_validation += p.test.size();
    inner.partitions.emplace(u, std::move(p));
  }
  if (n_validation == 0) throw DataError("select_rank: validation split is empty");
  // Records of seen users outside their train partition stay unused.
  for (const auto& [u, p] : split.partitions)
    if (!inner.partitions.contains(u)) {
      inner.unseen_users.insert(u);
      inner.partitions.emplace(u, SplitSpec::Partition{});
    }

  RankSelection sel;
  double best = -1.0;
  for (auto b : candidates) {
    JointConfig cfg = base_config;
    cfg.rank = b;
    const TrainedModel tm = train_joint(data, inner, cfg);
    const EvalReport rep = evaluate_split(tm.model, tm.seen_weights, {}, inner, data, "lore");
    const double acc = rep.seen.value_or(0.0);
    sel.validation.emplace_back(b, acc);
    if (acc > best + 1e-12) {
      best = acc;
      sel.chosen = b;
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Parameter accounting

enum class Method { Lore, Bt };

/// lore: B*D + B*N (basis plus per-user weights); bt: D.
constexpr std::uint64_t parameter_count(Method method, std::uint64_t b, std::uint64_t d, std::uint64_t n) {
  return method == Method::Lore ? b * d + b * n : d;
}

}  // namespace lore
