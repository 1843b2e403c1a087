#pragma once

// Joint learning of the reward basis and seen-user simplex weights, and
// frozen-basis few-shot adaptation for new users.
//
// Joint objective (per-user mean, each seen user counts equally):
//     J(A, {w_i}) = sum_i 1/|D_i| sum_{(c, r) in D_i} l(w_i^T A (e_c - e_r))
// Few-shot objective for one new user (unnormalized, basis fixed):
//     F(w) = sum_{(c, r)} l(w^T A (e_c - e_r))
// Both are minimized with Adam; user weights live on the simplex through
// w = softmax(logits).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lore/math.hpp"
#include "lore/optimizer.hpp"
#include "lore/parallel.hpp"
#include "lore/rng.hpp"
#include "lore/types.hpp"

namespace lore {

struct JointConfig {
  std::size_t rank = 5;
  double lr = 0.5;
  std::size_t epochs = 500;
  double tolerance = 1e-8;     // early stop on max |param change| over an epoch
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
};

struct FewShotConfig {
  double lr = 0.1;
  std::size_t epochs = 1000;
  double tolerance = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
};

struct TrainingTelemetry {
  std::vector<double> objective;     // objective at the start of each epoch
  std::vector<double> best;          // best-so-far objective
  std::vector<double> wall_seconds;  // elapsed since training start
  std::size_t epochs_run = 0;
  bool converged = false;
};

struct TrainedModel {
  RewardBasisModel model;
  WeightTable seen_weights;
  TrainingTelemetry telemetry;
};

/// Optional starting point for joint training. Missing users start at zero
/// logits.
struct JointInit {
  Matrix basis;
  std::map<std::string, Vector> logits;
};

/// Snapshot handed to an observer after every epoch's update.
struct EpochView {
  std::size_t epoch;
  double objective;
  const Matrix& basis;
  const std::vector<std::string>& users;
  const std::vector<Vector>& weights;
};

using EpochObserver = std::function<void(const EpochView&)>;

/// i.i.d. N(0, 1/D) entries from the "basis-init" stream of the seed.
inline Matrix init_basis(std::size_t rank, std::size_t dim, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "basis-init");
  Matrix a(rank, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : a.flat()) v = scale * rng.normal();
  return a;
}

namespace detail {

// Feature differences of one user's records, row-major n x D.
struct UserBlock {
  std::string user;
  Matrix diffs;
  std::vector<std::size_t> positions;
};

inline Matrix stack_differences(std::span<const ComparisonRecord> records, std::size_t dim) {
  Matrix diffs(records.size(), dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.chosen.size() != dim || r.rejected.size() != dim)
      throw DimensionError("record " + std::to_string(i) + " has dimension " + std::to_string(r.chosen.size()) +
                           "/" + std::to_string(r.rejected.size()) + ", expected " + std::to_string(dim));
    auto row = diffs.row(i);
    for (std::size_t k = 0; k < dim; ++k) row[k] = r.chosen[k] - r.rejected[k];
  }
  return diffs;
}

// Accumulates c * l(w^T A d) and its gradients for rows [begin, end) of one
// user's block. grad_basis += c * s * w d^T, grad_w += c * s * A d.
struct Accumulator {
  double loss = 0.0;
  std::size_t bad_row = static_cast<std::size_t>(-1);
};

inline void accumulate_block(const Matrix& basis, std::span<const double> w, const Matrix& diffs,
                             std::span<const std::size_t> rows, double scale, Matrix* grad_basis,
                             std::span<double> grad_w, Accumulator& acc, Vector& scratch) {
  const std::size_t rank = basis.rows();
  const std::size_t dim = basis.cols();
  scratch.resize(rank);
  for (auto r : rows) {
    auto d = diffs.row(r);
    double z = 0.0;
    for (std::size_t b = 0; b < rank; ++b) {
      auto arow = basis.row(b);
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += arow[k] * d[k];
      scratch[b] = s;
      z += w[b] * s;
    }
    if (!std::isfinite(z)) {
      if (acc.bad_row == static_cast<std::size_t>(-1)) acc.bad_row = r;
      acc.loss = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    acc.loss += scale * logistic_loss(z);
    const double slope = scale * logistic_loss_slope(z);
    for (std::size_t b = 0; b < rank; ++b) {
      grad_w[b] += slope * scratch[b];
      if (grad_basis) {
        auto g = grad_basis->row(b);
        const double f = slope * w[b];
        for (std::size_t k = 0; k < dim; ++k) g[k] += f * d[k];
      }
    }
  }
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace detail

/// Joint objective over every user of weights_by_user that has records in
/// train_data. Throws if such a user has no weights, or a weighted user has
/// no records.
inline double joint_objective(const RewardBasisModel& model, const WeightTable& weights_by_user,
                              const PreferenceDataset& train_data) {
  double total = 0.0;
  for (const auto& [user, positions] : train_data.user_index()) {
    auto it = weights_by_user.find(user);
    if (it == weights_by_user.end()) throw DataError("joint_objective: no weights for user '" + user + "'");
    if (it->second.size() != model.rank()) throw DimensionError("joint_objective: weight length vs rank");
    const auto records = train_data.select(positions);
    const Matrix diffs = detail::stack_differences(records, model.dim());
    Vector grad_w(model.rank(), 0.0);
    Vector scratch;
    detail::Accumulator acc;
    const auto rows = detail::iota(records.size());
    detail::accumulate_block(model.basis(), it->second.values(), diffs, rows,
                             1.0 / static_cast<double>(records.size()), nullptr, grad_w, acc, scratch);
    total += acc.loss;
  }
  for (const auto& [user, _] : weights_by_user)
    if (train_data.records_of(user).empty())
      throw DataError("joint_objective: user '" + user + "' has zero records");
  return total;
}

/// Minimizes the joint objective over the seen users of `split` with Adam on
/// (A, all user logits). Deterministic for a fixed (seed, config, data).
inline TrainedModel train_joint(const PreferenceDataset& data, const SplitSpec& split, const JointConfig& config,
                                const std::optional<JointInit>& init = std::nullopt,
                                const EpochObserver& observer = {}) {
  require_valid(data);
  const std::size_t dim = data.dim();
  const std::size_t rank = config.rank;
  if (rank == 0) throw DataError("train_joint: rank must be >= 1");
  if (rank > dim) throw DimensionError("train_joint: rank exceeds feature dimension");
  if (split.seen_users.empty()) throw DataError("train_joint: no seen users");

  std::vector<detail::UserBlock> blocks;
  std::vector<std::string> users;
  for (const auto& u : split.seen_users) {
    const auto& positions = split.partition(u).train;
    if (positions.empty()) throw DataError("train_joint: seen user '" + u + "' has zero training records");
    const auto records = data.select(positions);
    blocks.push_back({u, detail::stack_differences(records, dim), positions});
    users.push_back(u);
  }

  Matrix basis = init ? init->basis : init_basis(rank, dim, config.seed);
  if (basis.rows() != rank || basis.cols() != dim) throw DimensionError("train_joint: initial basis has wrong shape");
  Vector logits(users.size() * rank, 0.0);
  if (init) {
    for (std::size_t u = 0; u < users.size(); ++u) {
      auto it = init->logits.find(users[u]);
      if (it == init->logits.end()) continue;
      if (it->second.size() != rank) throw DimensionError("train_joint: initial logits have wrong length");
      std::copy(it->second.begin(), it->second.end(), logits.begin() + static_cast<std::ptrdiff_t>(u * rank));
    }
  }

  AdamState basis_opt(basis.size(), config.adam());
  AdamState logit_opt(logits.size(), config.adam());
  Matrix grad_basis(rank, dim);
  Vector grad_logits(logits.size());
  std::vector<Vector> weights(users.size());
  Vector scratch;

  auto refresh_weights = [&] {
    for (std::size_t u = 0; u < users.size(); ++u)
      weights[u] = softmax(std::span<const double>(logits).subspan(u * rank, rank));
  };

  // Gradient over a subset of rows per user (all rows when rows_of is null).
  auto evaluate = [&](const std::vector<std::vector<std::size_t>>* rows_of, std::size_t epoch) {
    std::fill(grad_basis.flat().begin(), grad_basis.flat().end(), 0.0);
    std::fill(grad_logits.begin(), grad_logits.end(), 0.0);
    double total = 0.0;
    Vector grad_w(rank);
    for (std::size_t u = 0; u < blocks.size(); ++u) {
      const auto& blk = blocks[u];
      const auto all_rows = detail::iota(blk.diffs.rows());
      const auto& rows = rows_of ? (*rows_of)[u] : all_rows;
      if (rows.empty()) continue;
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      detail::Accumulator acc;
      detail::accumulate_block(basis, weights[u], blk.diffs, rows, 1.0 / static_cast<double>(blk.diffs.rows()),
                               &grad_basis, grad_w, acc, scratch);
      if (!std::isfinite(acc.loss)) {
        const std::size_t rec = acc.bad_row < blk.positions.size() ? blk.positions[acc.bad_row] : 0;
        throw TrainingError("train_joint: non-finite loss at epoch " + std::to_string(epoch) + ", user '" +
                            blk.user + "', record " + std::to_string(rec));
      }
      total += acc.loss;
      const Vector gl = chain_grad_logits(grad_w, weights[u]);
      std::copy(gl.begin(), gl.end(), grad_logits.begin() + static_cast<std::ptrdiff_t>(u * rank));
    }
    return total;
  };

  TrainedModel out;
  auto& tel = out.telemetry;
  const auto t0 = std::chrono::steady_clock::now();
  double best = std::numeric_limits<double>::infinity();
  Vector basis_before, logits_before;

  refresh_weights();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    basis_before.assign(basis.flat().begin(), basis.flat().end());
    logits_before = logits;

    double objective = 0.0;
    if (config.batch_size == 0) {
      objective = evaluate(nullptr, epoch);
      basis_opt.step(basis.flat(), grad_basis.flat());
      logit_opt.step(logits, grad_logits);
      refresh_weights();
    } else {
      objective = evaluate(nullptr, epoch);
      // Record-level shuffle over (user, row) pairs, one stream per epoch.
      std::vector<std::pair<std::size_t, std::size_t>> order;
      for (std::size_t u = 0; u < blocks.size(); ++u)
        for (std::size_t r = 0; r < blocks[u].diffs.rows(); ++r) order.emplace_back(u, r);
      Rng rng = Rng::derive(config.seed, "minibatch", epoch);
      rng.shuffle(order);
      std::vector<std::vector<std::size_t>> rows_of(blocks.size());
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        for (auto& r : rows_of) r.clear();
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        for (std::size_t i = start; i < stop; ++i) rows_of[order[i].first].push_back(order[i].second);
        evaluate(&rows_of, epoch);
        basis_opt.step(basis.flat(), grad_basis.flat());
        logit_opt.step(logits, grad_logits);
        refresh_weights();
      }
    }

    best = std::min(best, objective);
    tel.objective.push_back(objective);
    tel.best.push_back(best);
    tel.wall_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    tel.epochs_run = epoch + 1;
    if (observer) observer(EpochView{epoch, objective, basis, users, weights});

    const double change =
        std::max(max_abs_change(basis_before, basis.flat()), max_abs_change(logits_before, logits));
    if (change < config.tolerance) {
      tel.converged = true;
      break;
    }
  }

  out.model = RewardBasisModel(basis);
  for (std::size_t u = 0; u < users.size(); ++u) out.seen_weights.emplace(users[u], UserWeights(weights[u]));
  return out;
}

/// Adam on softmax logits (zero init) of sum_i l(w^T rewards_i), where row
/// i of `reward_diffs` holds the B basis reward differences of record i.
inline UserWeights fit_simplex_weights(const Matrix& reward_diffs, const FewShotConfig& config) {
  const std::size_t rank = reward_diffs.cols();
  Vector logits(rank, 0.0);
  AdamState opt(rank, config.adam());
  Vector w = softmax(logits);
  Vector grad_w(rank);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    for (std::size_t i = 0; i < reward_diffs.rows(); ++i) {
      auto r = reward_diffs.row(i);
      const double z = dot(w, r);
      if (!std::isfinite(z)) throw TrainingError("few-shot: non-finite margin at record " + std::to_string(i));
      const double slope = logistic_loss_slope(z);
      for (std::size_t b = 0; b < rank; ++b) grad_w[b] += slope * r[b];
    }
    const Vector gl = chain_grad_logits(grad_w, w);
    const Vector before = logits;
    opt.step(logits, gl);
    w = softmax(logits);
    if (max_abs_change(before, logits) < config.tolerance) break;
  }
  return UserWeights(w);
}

/// Estimates a new user's simplex weights with the basis frozen. With no
/// records the result is the uniform point.
inline UserWeights fewshot_adapt(const RewardBasisModel& model, std::span<const ComparisonRecord> records,
                                 const FewShotConfig& config = {}) {
  if (records.empty()) return UserWeights::uniform(model.rank());
  const Matrix diffs = detail::stack_differences(records, model.dim());
  Matrix rewards(diffs.rows(), model.rank());
  for (std::size_t i = 0; i < diffs.rows(); ++i) {
    const Vector r = mat_vec(model.basis(), diffs.row(i));
    std::copy(r.begin(), r.end(), rewards.row(i).begin());
  }
  return fit_simplex_weights(rewards, config);
}

inline UserWeights fewshot_adapt(const RewardBasisModel& model, const std::vector<ComparisonRecord>& records,
                                 const FewShotConfig& config = {}) {
  return fewshot_adapt(model, std::span<const ComparisonRecord>(records), config);
}

/// Few-shot objective F(w) for a fixed basis (used by oracles and reports).
inline double fewshot_objective(const RewardBasisModel& model, std::span<const ComparisonRecord> records,
                                std::span<const double> w) {
  double total = 0.0;
  for (const auto& rec : records) {
    const Vector r = mat_vec(model.basis(), feature_difference(rec));
    total += logistic_loss(dot(w, r));
  }
  return total;
}

/// Adapts every unseen user of the split from its few-shot pool. Jobs are
/// independent and run in parallel; the result does not depend on the
/// thread count.
inline WeightTable adapt_unseen_users(const RewardBasisModel& model, const PreferenceDataset& data,
                                      const SplitSpec& split, const FewShotConfig& config = {}) {
  const std::vector<std::string> users(split.unseen_users.begin(), split.unseen_users.end());
  std::vector<UserWeights> out(users.size());
  parallel_for(users.size(), [&](std::size_t i) {
    const auto records = data.select(split.partition(users[i]).train);
    out[i] = fewshot_adapt(model, records, config);
  });
  WeightTable table;
  for (std::size_t i = 0; i < users.size(); ++i) table.emplace(users[i], std::move(out[i]));
  return table;
}

}  // namespace lore
