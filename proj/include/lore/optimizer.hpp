#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include "lore/types.hpp"

namespace lore {

struct AdamConfig {
  double lr = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a flat parameter block. One state per block.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  const AdamConfig& config() const noexcept { return cfg_; }
  std::uint64_t step_count() const noexcept { return t_; }
  std::size_t size() const noexcept { return m_.size(); }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }

  /// Applies one update in place. Throws (leaving params and state
  /// untouched) on shape mismatch or a non-finite gradient.
  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw DimensionError("adam_step: parameter/gradient shape does not match optimizer state");
    for (std::size_t i = 0; i < grads.size(); ++i)
      if (!std::isfinite(grads[i])) throw TrainingError("adam_step: non-finite gradient at index " + std::to_string(i));
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
      const double m_hat = m_[i] / bc1;
      const double v_hat = v_[i] / bc2;
      params[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  Vector m_;
  Vector v_;
};

inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  state.step(params, grads);
}

// ---------------------------------------------------------------------------
// Simplex reparameterization: w = softmax(logits).

struct SimplexParam {
  Vector logits;
  static SimplexParam zeros(std::size_t b) { return {Vector(b, 0.0)}; }
};

inline Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax of empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline UserWeights weights_from_logits(const SimplexParam& p) { return UserWeights(softmax(p.logits)); }

/// J_softmax^T g = w * (g - <w, g>).
inline Vector chain_grad_logits(std::span<const double> grad_w, std::span<const double> w) {
  if (grad_w.size() != w.size()) throw DimensionError("chain_grad_logits: length mismatch");
  double wg = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) wg += w[i] * grad_w[i];
  Vector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * (grad_w[i] - wg);
  return out;
}

inline Vector chain_grad_logits(std::span<const double> grad_w, const UserWeights& w) {
  return chain_grad_logits(grad_w, w.values());
}

inline double max_abs_change(std::span<const double> before, std::span<const double> after) {
  double m = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) m = std::max(m, std::abs(after[i] - before[i]));
  return m;
}

}  // namespace lore
