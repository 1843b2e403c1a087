#pragma once

// Tabular policy basis. Prompts and responses are finite index sets; each of
// the B basis policies is a row-softmax over a logit table, and a user's
// preference between two responses is the weighted sum of the basis
// policies' implied reward differences
//     z = sum_j w_j * beta * (log pi_j(y_c|x)/pi_ref(y_c|x) - log pi_j(y_r|x)/pi_ref(y_r|x)).
// The policy class (one free logit per prompt-response cell) is a desk-scale
// stand-in for fine-tuned language models.
//
// Items are encoded as one-hot feature vectors of length
// n_prompts * n_responses (index x * n_responses + y), so tabular data uses
// the ordinary PreferenceDataset and file format.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lore/math.hpp"
#include "lore/optimizer.hpp"
#include "lore/rng.hpp"
#include "lore/synth.hpp"
#include "lore/trainer.hpp"
#include "lore/types.hpp"

namespace lore {

struct TabularItem {
  std::size_t prompt;
  std::size_t response;
};

inline FeatureVector tabular_item(std::size_t n_prompts, std::size_t n_responses, std::size_t prompt,
                                  std::size_t response) {
  if (prompt >= n_prompts || response >= n_responses) throw DimensionError("tabular_item: index out of range");
  Vector v(n_prompts * n_responses, 0.0);
  v[prompt * n_responses + response] = 1.0;
  return FeatureVector(std::move(v));
}

inline TabularItem decode_tabular_item(const FeatureVector& item, std::size_t n_responses) {
  std::optional<std::size_t> hot;
  for (std::size_t k = 0; k < item.size(); ++k) {
    if (item[k] == 0.0) continue;
    if (item[k] != 1.0 || hot) throw DataError("tabular item is not a one-hot vector");
    hot = k;
  }
  if (!hot) throw DataError("tabular item is not a one-hot vector");
  return {*hot / n_responses, *hot % n_responses};
}

struct TabularComparison {
  std::size_t prompt;
  std::size_t chosen;
  std::size_t rejected;
};

inline TabularComparison decode_tabular_record(const ComparisonRecord& rec, std::size_t n_prompts,
                                               std::size_t n_responses) {
  if (rec.chosen.size() != n_prompts * n_responses || rec.rejected.size() != n_prompts * n_responses)
    throw DimensionError("tabular record has dimension " + std::to_string(rec.chosen.size()) + ", expected " +
                         std::to_string(n_prompts * n_responses));
  const auto c = decode_tabular_item(rec.chosen, n_responses);
  const auto r = decode_tabular_item(rec.rejected, n_responses);
  if (c.prompt != r.prompt) throw DataError("tabular record compares responses of different prompts");
  return {c.prompt, c.response, r.response};
}

inline void require_row_stochastic(const Matrix& p, const char* what) {
  for (std::size_t x = 0; x < p.rows(); ++x) {
    double s = 0.0;
    for (double v : p.row(x)) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError(std::string(what) + ": negative or non-finite entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DataError(std::string(what) + ": row does not sum to 1");
  }
}

/// Row-wise log-softmax of a logit table.
inline Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t x = 0; x < logits.rows(); ++x) {
    auto row = logits.row(x);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t y = 0; y < row.size(); ++y) out(x, y) = row[y] - lse;
  }
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t x = 0; x < logits.rows(); ++x) {
    const Vector p = softmax(logits.row(x));
    std::copy(p.begin(), p.end(), out.row(x).begin());
  }
  return out;
}

class TabularPolicySet {
 public:
  TabularPolicySet() = default;
  TabularPolicySet(Matrix ref_policy, std::vector<Matrix> basis_logits, double beta)
      : ref_(std::move(ref_policy)), logits_(std::move(basis_logits)), beta_(beta) {
    if (!(beta_ > 0.0) || !std::isfinite(beta_)) throw DataError("policy set: beta must be > 0");
    if (ref_.rows() == 0 || ref_.cols() < 2) throw DimensionError("policy set: need >= 1 prompt and >= 2 responses");
    require_row_stochastic(ref_, "reference policy");
    for (const auto& l : logits_) {
      if (l.rows() != ref_.rows() || l.cols() != ref_.cols()) throw DimensionError("policy set: logit table shape");
      if (!all_finite(l.flat())) throw DataError("policy set: non-finite logits");
    }
  }

  std::size_t n_prompts() const noexcept { return ref_.rows(); }
  std::size_t n_responses() const noexcept { return ref_.cols(); }
  std::size_t rank() const noexcept { return logits_.size(); }
  double beta() const noexcept { return beta_; }
  const Matrix& ref_policy() const noexcept { return ref_; }
  const std::vector<Matrix>& basis_logits() const noexcept { return logits_; }
  std::vector<Matrix>& mutable_basis_logits() noexcept { return logits_; }

  Matrix policy(std::size_t j) const { return softmax_rows(logits_.at(j)); }

  friend bool operator==(const TabularPolicySet&, const TabularPolicySet&) = default;

 private:
  Matrix ref_;
  std::vector<Matrix> logits_;
  double beta_ = 1.0;
};

/// pi*(y|x) = pi_ref(y|x) exp(r(x, y)/beta) / Z(x).
inline Matrix kl_regularized_optimum(const Matrix& rewards, const Matrix& ref_policy, double beta) {
  if (!(beta > 0.0)) throw DataError("kl_regularized_optimum: beta must be > 0");
  if (rewards.rows() != ref_policy.rows() || rewards.cols() != ref_policy.cols())
    throw DimensionError("kl_regularized_optimum: reward/reference shape mismatch");
  Matrix out(rewards.rows(), rewards.cols());
  for (std::size_t x = 0; x < rewards.rows(); ++x) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < rewards.cols(); ++y)
      if (ref_policy(x, y) > 0.0) mx = std::max(mx, rewards(x, y) / beta);
    double z = 0.0;
    for (std::size_t y = 0; y < rewards.cols(); ++y) {
      out(x, y) = ref_policy(x, y) > 0.0 ? ref_policy(x, y) * std::exp(rewards(x, y) / beta - mx) : 0.0;
      z += out(x, y);
    }
    for (std::size_t y = 0; y < rewards.cols(); ++y) out(x, y) /= z;
  }
  return out;
}

/// beta * log pi_j(y|x) / pi_ref(y|x) for all cells of policy j.
inline Matrix implied_rewards(const TabularPolicySet& set, std::size_t j) {
  const Matrix logp = log_softmax_rows(set.basis_logits().at(j));
  Matrix out(set.n_prompts(), set.n_responses());
  for (std::size_t x = 0; x < out.rows(); ++x)
    for (std::size_t y = 0; y < out.cols(); ++y) {
      const double ref = set.ref_policy()(x, y);
      out(x, y) = ref > 0.0 ? set.beta() * (logp(x, y) - std::log(ref)) : std::numeric_limits<double>::quiet_NaN();
    }
  return out;
}

inline double implied_reward_diff(const TabularPolicySet& set, std::size_t j, std::size_t prompt, std::size_t y,
                                  std::size_t y_other) {
  if (j >= set.rank() || prompt >= set.n_prompts() || y >= set.n_responses() || y_other >= set.n_responses())
    throw DimensionError("implied_reward_diff: index out of range");
  const auto& ref = set.ref_policy();
  if (ref(prompt, y) <= 0.0 || ref(prompt, y_other) <= 0.0)
    throw DataError("implied_reward_diff: zero reference probability");
  const Matrix logp = log_softmax_rows(set.basis_logits()[j]);
  if (!std::isfinite(logp(prompt, y)) || !std::isfinite(logp(prompt, y_other)))
    throw DataError("implied_reward_diff: zero policy probability");
  return set.beta() * ((logp(prompt, y) - std::log(ref(prompt, y))) -
                       (logp(prompt, y_other) - std::log(ref(prompt, y_other))));
}

/// The policy set as a linear reward basis over one-hot tabular items:
/// A[j, x * n_responses + y] = beta * log pi_j(y|x) / pi_ref(y|x).
inline RewardBasisModel as_reward_basis(const TabularPolicySet& set) {
  Matrix a(set.rank(), set.n_prompts() * set.n_responses());
  for (std::size_t j = 0; j < set.rank(); ++j) {
    const Matrix r = implied_rewards(set, j);
    std::copy(r.flat().begin(), r.flat().end(), a.row(j).begin());
  }
  return RewardBasisModel(std::move(a));
}

struct PolicyConfig {
  std::size_t rank = 2;
  double beta = 1.0;
  double lr = 0.5;
  std::size_t epochs = 500;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  // Std of Gaussian noise added to log pi_ref when initializing basis logits.
  // Identical basis policies receive identical gradients forever, so B > 1
  // needs a nonzero value.
  double init_noise = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
};

/// Uniform reference rows.
inline Matrix uniform_policy(std::size_t n_prompts, std::size_t n_responses) {
  return Matrix(n_prompts, n_responses, 1.0 / static_cast<double>(n_responses));
}

inline TabularPolicySet init_policy_set(const Matrix& ref_policy, const PolicyConfig& config) {
  Rng rng = Rng::derive(config.seed, "policy-init");
  std::vector<Matrix> logits;
  for (std::size_t j = 0; j < config.rank; ++j) {
    Matrix l(ref_policy.rows(), ref_policy.cols());
    for (std::size_t x = 0; x < l.rows(); ++x)
      for (std::size_t y = 0; y < l.cols(); ++y) {
        if (ref_policy(x, y) <= 0.0) throw DataError("policy basis: reference policy must be strictly positive");
        const double noise = config.init_noise * rng.normal();
        l(x, y) = std::log(ref_policy(x, y)) + noise;
      }
    logits.push_back(std::move(l));
  }
  return TabularPolicySet(ref_policy, std::move(logits), config.beta);
}

struct PolicyTrainResult {
  TabularPolicySet policies;
  WeightTable weights;
  TrainingTelemetry telemetry;
};

namespace detail {

// B implied reward differences of one comparison.
inline Vector implied_differences(const std::vector<Matrix>& logp, const Matrix& log_ref, double beta,
                                  const TabularComparison& c) {
  Vector h(logp.size());
  for (std::size_t j = 0; j < logp.size(); ++j)
    h[j] = beta * ((logp[j](c.prompt, c.chosen) - log_ref(c.prompt, c.chosen)) -
                   (logp[j](c.prompt, c.rejected) - log_ref(c.prompt, c.rejected)));
  return h;
}

inline Matrix log_of(const Matrix& p) {
  Matrix out(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.size(); ++i) out.flat()[i] = std::log(p.flat()[i]);
  return out;
}

}  // namespace detail

/// Policy-basis objective: sum over users of 1/|D_i| sum l(z).
inline double policy_basis_objective(const TabularPolicySet& set, const WeightTable& weights,
                                     const PreferenceDataset& data) {
  std::vector<Matrix> logp;
  for (const auto& l : set.basis_logits()) logp.push_back(log_softmax_rows(l));
  const Matrix log_ref = detail::log_of(set.ref_policy());
  double total = 0.0;
  for (const auto& [user, positions] : data.user_index()) {
    const auto& w = weights.at(user);
    double s = 0.0;
    for (auto p : positions) {
      const auto c = decode_tabular_record(data[p], set.n_prompts(), set.n_responses());
      s += logistic_loss(dot(w.values(), detail::implied_differences(logp, log_ref, set.beta(), c)));
    }
    total += s / static_cast<double>(positions.size());
  }
  return total;
}

/// Minimizes the policy-basis objective over all users of `data` with Adam
/// on the basis logit tables and the user weight logits (zero init).
inline PolicyTrainResult train_policy_basis(const PreferenceDataset& data, const Matrix& ref_policy,
                                            const PolicyConfig& config) {
  if (config.rank == 0) throw DataError("train_policy_basis: rank must be >= 1");
  const std::size_t np = ref_policy.rows();
  const std::size_t nr = ref_policy.cols();
  require_row_stochastic(ref_policy, "reference policy");
  PolicyTrainResult out{init_policy_set(ref_policy, config), {}, {}};
  const std::size_t rank = config.rank;
  const double beta = config.beta;

  struct UserData {
    std::string id;
    std::vector<TabularComparison> comps;
  };
  std::vector<UserData> users;
  for (const auto& [u, positions] : data.user_index()) {
    UserData ud{u, {}};
    for (auto p : positions) ud.comps.push_back(decode_tabular_record(data[p], np, nr));
    users.push_back(std::move(ud));
  }
  if (users.empty()) return out;

  auto& logits = out.policies.mutable_basis_logits();
  const Matrix log_ref = detail::log_of(ref_policy);
  Vector user_logits(users.size() * rank, 0.0);
  std::vector<AdamState> basis_opt;
  for (std::size_t j = 0; j < rank; ++j) basis_opt.emplace_back(np * nr, config.adam());
  AdamState weight_opt(user_logits.size(), config.adam());

  std::vector<Matrix> grads(rank, Matrix(np, nr));
  Vector grad_logits(user_logits.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<Matrix> logp;
    for (const auto& l : logits) logp.push_back(log_softmax_rows(l));
    for (auto& g : grads) std::fill(g.flat().begin(), g.flat().end(), 0.0);
    double objective = 0.0;
    for (std::size_t u = 0; u < users.size(); ++u) {
      const Vector w = softmax(std::span<const double>(user_logits).subspan(u * rank, rank));
      const double scale = 1.0 / static_cast<double>(users[u].comps.size());
      Vector grad_w(rank, 0.0);
      for (const auto& c : users[u].comps) {
        const Vector h = detail::implied_differences(logp, log_ref, beta, c);
        const double z = dot(w, h);
        if (!std::isfinite(z))
          throw TrainingError("train_policy_basis: non-finite loss at epoch " + std::to_string(epoch) + ", user '" +
                              users[u].id + "'");
        objective += scale * logistic_loss(z);
        const double slope = scale * logistic_loss_slope(z);
        for (std::size_t j = 0; j < rank; ++j) {
          grad_w[j] += slope * h[j];
          // The log-partition cancels in the difference, so only the two
          // compared cells receive gradient.
          grads[j](c.prompt, c.chosen) += slope * w[j] * beta;
          grads[j](c.prompt, c.rejected) -= slope * w[j] * beta;
        }
      }
      const Vector gl = chain_grad_logits(grad_w, w);
      std::copy(gl.begin(), gl.end(), grad_logits.begin() + static_cast<std::ptrdiff_t>(u * rank));
    }
    best = std::min(best, objective);
    out.telemetry.objective.push_back(objective);
    out.telemetry.best.push_back(best);
    out.telemetry.epochs_run = epoch + 1;

    double change = 0.0;
    for (std::size_t j = 0; j < rank; ++j) {
      const Vector before(logits[j].flat().begin(), logits[j].flat().end());
      basis_opt[j].step(logits[j].flat(), grads[j].flat());
      change = std::max(change, max_abs_change(before, logits[j].flat()));
    }
    const Vector before = user_logits;
    weight_opt.step(user_logits, grad_logits);
    change = std::max(change, max_abs_change(before, user_logits));
    if (change < config.tolerance) {
      out.telemetry.converged = true;
      break;
    }
  }
  for (std::size_t u = 0; u < users.size(); ++u)
    out.weights.emplace(users[u].id, UserWeights(softmax(std::span<const double>(user_logits).subspan(u * rank, rank))));
  return out;
}

/// Simplex weights of a new user with the policy basis frozen: Adam on the
/// weight logits of sum l(w^T h), h the implied reward differences.
inline UserWeights fewshot_policy_weights(const TabularPolicySet& set, std::span<const ComparisonRecord> records,
                                          const FewShotConfig& config = {}) {
  if (records.empty()) return UserWeights::uniform(set.rank());
  std::vector<Matrix> logp;
  for (const auto& l : set.basis_logits()) logp.push_back(log_softmax_rows(l));
  const Matrix log_ref = detail::log_of(set.ref_policy());
  Matrix diffs(records.size(), set.rank());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto c = decode_tabular_record(records[i], set.n_prompts(), set.n_responses());
    const Vector h = detail::implied_differences(logp, log_ref, set.beta(), c);
    std::copy(h.begin(), h.end(), diffs.row(i).begin());
  }
  return fit_simplex_weights(diffs, config);
}

/// Unnormalized few-shot policy objective sum l(w^T h).
inline double fewshot_policy_objective(const TabularPolicySet& set, std::span<const ComparisonRecord> records,
                                       std::span<const double> w) {
  double total = 0.0;
  for (const auto& rec : records) {
    const auto c = decode_tabular_record(rec, set.n_prompts(), set.n_responses());
    double z = 0.0;
    for (std::size_t j = 0; j < set.rank(); ++j) z += w[j] * implied_reward_diff(set, j, c.prompt, c.chosen, c.rejected);
    total += logistic_loss(z);
  }
  return total;
}

/// Fraction of records whose weighted implied reward difference is > 0.
inline double policy_accuracy(const TabularPolicySet& set, const UserWeights& w,
                              std::span<const ComparisonRecord> records) {
  if (records.empty()) throw DataError("policy_accuracy: empty record list");
  std::vector<Matrix> logp;
  for (const auto& l : set.basis_logits()) logp.push_back(log_softmax_rows(l));
  const Matrix log_ref = detail::log_of(set.ref_policy());
  std::size_t correct = 0;
  for (const auto& rec : records) {
    const auto c = decode_tabular_record(rec, set.n_prompts(), set.n_responses());
    if (dot(w.values(), detail::implied_differences(logp, log_ref, set.beta(), c)) > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Synthetic tabular instances

struct TabularInstanceConfig {
  std::uint64_t seed = 0;
  std::size_t n_prompts = 5;
  std::size_t n_responses = 6;
  std::size_t basis_true = 2;
  double alpha = 0.001;
  std::size_t n_users = 20;
  std::size_t n_unseen = 20;
  std::size_t records_per_user = 30;
  std::size_t fewshot_per_unseen_user = 10;
  std::size_t test_per_user = 30;
};

struct TabularInstance {
  std::size_t n_prompts = 0;
  std::size_t n_responses = 0;
  std::vector<Matrix> true_rewards;  // basis_true tables, N(0, 1) entries
  PreferenceDataset data;            // seen train, few-shot and test records
  SplitSpec split;
  WeightTable true_weights;
};

/// Draws a random (prompt, distinct response pair) and labels it by the
/// true score sum_j w_j r_j(x, y); exact ties go to the lower index.
inline ComparisonRecord label_tabular(const std::string& user, std::span<const double> w,
                                      const std::vector<Matrix>& rewards, std::size_t n_prompts,
                                      std::size_t n_responses, Rng& rng) {
  const auto x = static_cast<std::size_t>(rng.below(n_prompts));
  const auto a = static_cast<std::size_t>(rng.below(n_responses));
  auto b = static_cast<std::size_t>(rng.below(n_responses - 1));
  if (b >= a) ++b;
  double sa = 0.0, sb = 0.0;
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    sa += w[j] * rewards[j](x, a);
    sb += w[j] * rewards[j](x, b);
  }
  const bool a_wins = sa > sb || (sa == sb && a < b);
  const auto c = a_wins ? a : b;
  const auto r = a_wins ? b : a;
  return {user, tabular_item(n_prompts, n_responses, x, c), tabular_item(n_prompts, n_responses, x, r)};
}

inline TabularInstance make_tabular_instance(const TabularInstanceConfig& cfg) {
  if (cfg.n_prompts == 0 || cfg.n_responses < 2 || cfg.basis_true == 0)
    throw DataError("tabular instance: need >= 1 prompt, >= 2 responses, >= 1 basis reward");
  TabularInstance inst;
  inst.n_prompts = cfg.n_prompts;
  inst.n_responses = cfg.n_responses;
  Rng reward_rng = Rng::derive(cfg.seed, "tab-rewards");
  for (std::size_t j = 0; j < cfg.basis_true; ++j) {
    Matrix r(cfg.n_prompts, cfg.n_responses);
    for (double& v : r.flat()) v = reward_rng.normal();
    inst.true_rewards.push_back(std::move(r));
  }
  std::vector<ComparisonRecord> records;
  for (std::size_t i = 0; i < cfg.n_users + cfg.n_unseen; ++i) {
    const bool seen = i < cfg.n_users;
    const std::string id = seen ? user_name('s', i) : user_name('u', i - cfg.n_users);
    Rng wrng = Rng::derive(cfg.seed, "tab-weights", i);
    Rng lrng = Rng::derive(cfg.seed, "tab-labels", i);
    const UserWeights w = sample_dirichlet(cfg.alpha, cfg.basis_true, wrng);
    SplitSpec::Partition part;
    const std::size_t n_train = seen ? cfg.records_per_user : cfg.fewshot_per_unseen_user;
    for (std::size_t k = 0; k < n_train; ++k) {
      part.train.push_back(records.size());
      records.push_back(label_tabular(id, w.values(), inst.true_rewards, cfg.n_prompts, cfg.n_responses, lrng));
    }
    for (std::size_t k = 0; k < cfg.test_per_user; ++k) {
      part.test.push_back(records.size());
      records.push_back(label_tabular(id, w.values(), inst.true_rewards, cfg.n_prompts, cfg.n_responses, lrng));
    }
    (seen ? inst.split.seen_users : inst.split.unseen_users).insert(id);
    inst.split.partitions.emplace(id, std::move(part));
    inst.true_weights.emplace(id, w);
  }
  inst.data = PreferenceDataset(cfg.n_prompts * cfg.n_responses, std::move(records));
  return inst;
}

}  // namespace lore
