#pragma once

// Synthetic preference benchmarks in the style of PersonalLLM: a hidden
// unit-norm reward basis, Dirichlet-distributed users, candidates per prompt
// and chosen/rejected labels taken from each user's true personalized score.
//
// Random streams (all derived from GeneratorConfig::seed, see rng.hpp):
//   "true-basis"        ground-truth basis rows
//   "items"             candidate features, train prompts then test prompts
//   "user-weights", i   Dirichlet draw of user i (seen users first)
//   "user-labels", i    prompt sampling and noisy labels of user i
//
// Per-user prompt sampling: each user draws its train (or few-shot) prompts
// uniformly without replacement from the train prompt pool; every user
// labels every test prompt once.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "lore/math.hpp"
#include "lore/rng.hpp"
#include "lore/types.hpp"

namespace lore {

enum class LabelMode { Deterministic, BtSample };

inline const char* to_string(LabelMode m) { return m == LabelMode::Deterministic ? "deterministic" : "bt_sample"; }

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t dim = 32;
  std::size_t basis_true = 5;
  double alpha = 0.001;
  std::size_t n_seen = 200;
  std::size_t n_unseen = 200;
  std::size_t prompts_train = 500;
  std::size_t prompts_test = 100;
  std::size_t responses_per_prompt = 8;
  std::size_t comparisons_per_seen_user = 45;
  std::size_t fewshot_per_unseen_user = 9;
  LabelMode label_noise = LabelMode::Deterministic;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DataError("generator: alpha must be > 0");
    if (dim == 0 || basis_true == 0 || n_seen == 0 || n_unseen == 0 || prompts_train == 0 || prompts_test == 0 ||
        comparisons_per_seen_user == 0 || fewshot_per_unseen_user == 0)
      throw DataError("generator: all counts must be >= 1");
    if (responses_per_prompt < 2) throw DataError("generator: need at least 2 responses per prompt");
    if (basis_true > dim) throw DataError("generator: basis_true exceeds dim");
    if (comparisons_per_seen_user > prompts_train || fewshot_per_unseen_user > prompts_train)
      throw DataError("generator: insufficient train prompts for the requested per-user counts");
  }
};

struct GroundTruth {
  Matrix true_basis;  // B_true x D, unit-norm rows
  WeightTable user_weights;
};

/// Symmetric Dirichlet(alpha) via normalized Gamma(alpha, 1) draws. The
/// normalization happens in log space so alpha far below 1 stays exact.
inline UserWeights sample_dirichlet(double alpha, std::size_t b, Rng& rng) {
  if (!(alpha > 0.0)) throw DataError("sample_dirichlet: alpha must be > 0");
  if (b == 0) throw DimensionError("sample_dirichlet: B must be >= 1");
  Vector logs(b);
  for (auto& l : logs) l = rng.log_gamma_draw(alpha);
  double mx = logs[0];
  for (double l : logs) mx = std::max(mx, l);
  Vector w(b);
  double sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    w[i] = std::exp(logs[i] - mx);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return UserWeights(std::move(w));
}

/// Feature values are rounded to float32 so datasets survive the on-disk
/// format bit-exactly.
inline double quantize(double x) { return static_cast<double>(static_cast<float>(x)); }

using PromptItems = std::vector<FeatureVector>;

/// prompts x responses_per_prompt feature vectors, coordinates N(0, 1) / sqrt(D).
inline std::vector<PromptItems> generate_items(std::size_t prompts, std::size_t responses, std::size_t dim, Rng& rng) {
  std::vector<PromptItems> out(prompts);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& prompt : out) {
    prompt.reserve(responses);
    for (std::size_t r = 0; r < responses; ++r) {
      Vector v(dim);
      for (double& x : v) x = quantize(scale * rng.normal());
      prompt.emplace_back(std::move(v));
    }
  }
  return out;
}

/// Train prompts followed by test prompts, from the "items" stream.
inline std::vector<PromptItems> generate_items(const GeneratorConfig& config, Rng& rng) {
  return generate_items(config.prompts_train + config.prompts_test, config.responses_per_prompt, config.dim, rng);
}

inline Matrix generate_true_basis(std::size_t b, std::size_t dim, Rng& rng) {
  Matrix a(b, dim);
  for (std::size_t r = 0; r < b; ++r) {
    auto row = a.row(r);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : row) {
        x = rng.normal();
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : row) x /= norm;
  }
  return a;
}

/// True personalized score w^T A* e.
inline double true_score(const UserWeights& w, const Matrix& true_basis, const FeatureVector& item) {
  return dot(w.values(), mat_vec(true_basis, item.values()));
}

/// Deterministic mode: chosen is the argmax and rejected the argmin of the
/// true score, ties broken toward the lowest candidate index; if every
/// candidate ties, rejected is the first index after chosen. BtSample mode:
/// two distinct candidates drawn uniformly, labeled by a Bernoulli draw with
/// P(first chosen) = sigmoid(score_first - score_second).
inline ComparisonRecord label_pair(const std::string& user, const UserWeights& w, const Matrix& true_basis,
                                   std::span<const FeatureVector> candidates, LabelMode mode, Rng& rng) {
  const std::size_t n = candidates.size();
  if (n < 2) throw DataError("label_pair: need at least 2 candidates");
  if (mode == LabelMode::Deterministic) {
    std::size_t best = 0, worst = 0;
    double hi = true_score(w, true_basis, candidates[0]);
    double lo = hi;
    for (std::size_t i = 1; i < n; ++i) {
      const double s = true_score(w, true_basis, candidates[i]);
      if (s > hi) {
        hi = s;
        best = i;
      }
      if (s < lo) {
        lo = s;
        worst = i;
      }
    }
    if (best == worst) worst = (best + 1) % n;
    return {user, candidates[best], candidates[worst]};
  }
  const auto a = static_cast<std::size_t>(rng.below(n));
  auto b = static_cast<std::size_t>(rng.below(n - 1));
  if (b >= a) ++b;
  const double p = sigmoid(true_score(w, true_basis, candidates[a]) - true_score(w, true_basis, candidates[b]));
  if (rng.uniform01() < p) return {user, candidates[a], candidates[b]};
  return {user, candidates[b], candidates[a]};
}

inline std::string user_name(char prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, index);
  return buf;
}

struct Benchmark {
  PreferenceDataset data;
  SplitSpec split;
  GroundTruth truth;
};

/// Assembles D_train and D_test^seen for seen users ("s00000", ...) and
/// D_fewshot and D_test^unseen for unseen users ("u00000", ...) into one
/// dataset, user-major, train records before test records.
inline Benchmark build_benchmark(const GeneratorConfig& config) {
  config.validate();
  Rng basis_rng = Rng::derive(config.seed, "true-basis");
  Rng item_rng = Rng::derive(config.seed, "items");
  Benchmark bench;
  bench.truth.true_basis = generate_true_basis(config.basis_true, config.dim, basis_rng);
  const auto items = generate_items(config, item_rng);
  const std::span<const PromptItems> train_prompts(items.data(), config.prompts_train);
  const std::span<const PromptItems> test_prompts(items.data() + config.prompts_train, config.prompts_test);

  std::vector<ComparisonRecord> records;
  const std::size_t total_users = config.n_seen + config.n_unseen;
  for (std::size_t i = 0; i < total_users; ++i) {
    const bool seen = i < config.n_seen;
    const std::string id = seen ? user_name('s', i) : user_name('u', i - config.n_seen);
    Rng weight_rng = Rng::derive(config.seed, "user-weights", i);
    Rng label_rng = Rng::derive(config.seed, "user-labels", i);
    const UserWeights w = sample_dirichlet(config.alpha, config.basis_true, weight_rng);

    SplitSpec::Partition part;
    const std::size_t k = seen ? config.comparisons_per_seen_user : config.fewshot_per_unseen_user;
    for (auto p : label_rng.sample_without_replacement(config.prompts_train, k)) {
      part.train.push_back(records.size());
      records.push_back(label_pair(id, w, bench.truth.true_basis, train_prompts[p], config.label_noise, label_rng));
    }
    for (const auto& prompt : test_prompts) {
      part.test.push_back(records.size());
      records.push_back(label_pair(id, w, bench.truth.true_basis, prompt, config.label_noise, label_rng));
    }
    (seen ? bench.split.seen_users : bench.split.unseen_users).insert(id);
    bench.split.partitions.emplace(id, std::move(part));
    bench.truth.user_weights.emplace(id, w);
  }
  bench.data = PreferenceDataset(config.dim, std::move(records));
  return bench;
}

/// Mean of the ground-truth basis rows: the stand-in for a frozen
/// non-personalized reference scorer.
inline Vector mean_basis_row(const Matrix& basis) {
  Vector m(basis.cols(), 0.0);
  for (std::size_t r = 0; r < basis.rows(); ++r)
    for (std::size_t k = 0; k < basis.cols(); ++k) m[k] += basis(r, k);
  for (double& v : m) v /= static_cast<double>(basis.rows());
  return m;
}

}  // namespace lore
