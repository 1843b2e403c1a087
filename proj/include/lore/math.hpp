#pragma once

// Scalar and vector primitives of the personalized Bradley-Terry model:
// basis rewards, personalized reward, BT probability, logistic loss and the
// hand-derived gradient of the per-record loss.

#include <cmath>
#include <span>
#include <string>

#include "lore/types.hpp"

namespace lore {

/// One latent reward per basis function, R_phi(x, y) in R^B.
using BasisRewards = Vector;

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DataError(std::string(what) + ": non-finite input");
}

/// A v for a B x D matrix and a length-D vector.
inline Vector mat_vec(const Matrix& a, std::span<const double> v) {
  if (v.size() != a.cols())
    throw DimensionError("mat_vec: vector length " + std::to_string(v.size()) + " vs " + std::to_string(a.cols()));
  Vector out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    double acc = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) acc += row[k] * v[k];
    out[r] = acc;
  }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline BasisRewards basis_rewards(const RewardBasisModel& model, const FeatureVector& item) {
  return mat_vec(model.basis(), item.values());
}

inline double personalized_reward(const UserWeights& w, std::span<const double> r) {
  if (w.size() != r.size()) throw DimensionError("personalized_reward: weights/rewards length mismatch");
  return dot(w.values(), r);
}

/// Logistic sigmoid, branch-stable for any finite input.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// P(chosen > rejected) = sigmoid(reward difference).
inline double bt_probability(double reward_diff) {
  require_finite(reward_diff, "bt_probability");
  return sigmoid(reward_diff);
}

/// l(z) = log(1 + exp(-z)).
inline double logistic_loss(double z) {
  require_finite(z, "logistic_loss");
  if (z >= 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

// d l / d z = -sigmoid(-z)
inline double logistic_loss_slope(double z) { return -sigmoid(-z); }

struct RecordGradient {
  double loss = 0.0;
  double margin = 0.0;  // z = w^T A (e_c - e_r)
  Matrix grad_basis;    // B x D
  Vector grad_weights;  // B
};

/// Loss and gradients of l(w^T A d) for a precomputed difference d. Gradients
/// are taken with respect to unconstrained A and raw w.
inline RecordGradient loss_and_gradient(const Matrix& basis, std::span<const double> w, std::span<const double> diff) {
  if (w.size() != basis.rows()) throw DimensionError("loss_and_gradient: weights length vs basis rank");
  RecordGradient g;
  const Vector ad = mat_vec(basis, diff);
  g.margin = dot(w, ad);
  g.loss = logistic_loss(g.margin);
  const double slope = logistic_loss_slope(g.margin);
  g.grad_basis = Matrix(basis.rows(), basis.cols());
  g.grad_weights.assign(basis.rows(), 0.0);
  for (std::size_t b = 0; b < basis.rows(); ++b) {
    g.grad_weights[b] = slope * ad[b];
    auto row = g.grad_basis.row(b);
    for (std::size_t k = 0; k < diff.size(); ++k) row[k] = slope * w[b] * diff[k];
  }
  return g;
}

inline RecordGradient loss_and_gradient(const RewardBasisModel& model, const UserWeights& w,
                                        const ComparisonRecord& record) {
  if (record.chosen.size() != model.dim())
    throw DimensionError("loss_and_gradient: record dim " + std::to_string(record.chosen.size()) + " vs model dim " +
                         std::to_string(model.dim()));
  return loss_and_gradient(model.basis(), w.values(), feature_difference(record));
}

}  // namespace lore
