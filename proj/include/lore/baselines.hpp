#pragma once

// Non-personalized comparison methods: a monolithic Bradley-Terry head
// trained on pooled comparisons, and a frozen reference scorer.

#include <span>
#include <string>

#include "lore/math.hpp"
#include "lore/optimizer.hpp"
#include "lore/trainer.hpp"
#include "lore/types.hpp"

namespace lore {

/// Scalar reward r(x, y) = v^T e(x, y).
struct LinearRewardModel {
  Vector weights;

  double score(const FeatureVector& item) const { return dot(weights, item.values()); }
  friend bool operator==(const LinearRewardModel&, const LinearRewardModel&) = default;
};

struct BtConfig {
  double lr = 0.5;
  std::size_t epochs = 500;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
};

/// Minimizes sum over all records of l(v^T (e_c - e_r)); user ids are
/// ignored. The head starts from row 0 of init_basis(1, D, seed), the same
/// draw a rank-1 joint model uses.
inline LinearRewardModel train_bt(const PreferenceDataset& train_data, const BtConfig& config,
                                  TrainingTelemetry* telemetry = nullptr) {
  require_valid(train_data);
  const std::size_t dim = train_data.dim();
  const Matrix diffs = detail::stack_differences(train_data.records(), dim);
  Matrix head = init_basis(1, dim, config.seed);
  AdamState opt(dim, config.adam());
  const Vector one{1.0};
  const auto rows = detail::iota(diffs.rows());
  Matrix grad(1, dim);
  Vector grad_w(1);
  Vector scratch;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.flat().begin(), grad.flat().end(), 0.0);
    detail::Accumulator acc;
    detail::accumulate_block(head, one, diffs, rows, 1.0, &grad, grad_w, acc, scratch);
    if (!std::isfinite(acc.loss))
      throw TrainingError("train_bt: non-finite loss at epoch " + std::to_string(epoch) + ", record " +
                          std::to_string(acc.bad_row));
    if (telemetry) {
      best = std::min(best, acc.loss);
      telemetry->objective.push_back(acc.loss);
      telemetry->best.push_back(best);
      telemetry->epochs_run = epoch + 1;
    }
    const Vector before(head.flat().begin(), head.flat().end());
    opt.step(head.flat(), grad.flat());
    if (max_abs_change(before, head.flat()) < config.tolerance) {
      if (telemetry) telemetry->converged = true;
      break;
    }
  }
  return LinearRewardModel{Vector(head.flat().begin(), head.flat().end())};
}

/// Frozen, non-personalized scorer: a fixed projection of the features.
inline double reference_score(std::span<const double> ref_vector, const FeatureVector& item) {
  if (ref_vector.size() != item.size()) throw DimensionError("reference_score: length mismatch");
  return dot(ref_vector, item.values());
}

/// Fraction of records where a scalar scorer ranks chosen strictly above
/// rejected.
template <class Scorer>
double scalar_accuracy(std::span<const ComparisonRecord> records, Scorer&& score) {
  if (records.empty()) throw DataError("scalar_accuracy: empty record list");
  std::size_t correct = 0;
  for (const auto& r : records)
    if (score(r.chosen) - score(r.rejected) > 0.0) ++correct;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

/// A scalar head viewed as a rank-1 reward basis (weights are then (1)).
inline RewardBasisModel as_basis(const LinearRewardModel& m) {
  Matrix a(1, m.weights.size());
  std::copy(m.weights.begin(), m.weights.end(), a.flat().begin());
  return RewardBasisModel(std::move(a));
}

}  // namespace lore
