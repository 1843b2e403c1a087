#pragma once

// Core domain types shared by every LoRe module: feature vectors, labeled
// comparisons, datasets with a per-user index, seen/unseen splits, the
// linear reward basis and simplex user weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lore {

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

// Malformed input data (files, datasets, configs).
struct DataError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

using Vector = std::vector<double>;

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Matrix: dense, row-major, value semantics.

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Items and comparisons

/// Fixed embedding e(x, y) of one prompt-response pair.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(Vector values) : values_(std::move(values)) {}
  FeatureVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  bool finite() const { return all_finite(values_); }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  Vector values_;
};

struct ComparisonRecord {
  std::string user_id;
  FeatureVector chosen;
  FeatureVector rejected;

  friend bool operator==(const ComparisonRecord&, const ComparisonRecord&) = default;
};

/// e_c - e_r, the only quantity the linear model ever sees.
inline Vector feature_difference(const ComparisonRecord& rec) {
  if (rec.chosen.size() != rec.rejected.size())
    throw DimensionError("chosen/rejected length mismatch for user '" + rec.user_id + "'");
  Vector d(rec.chosen.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = rec.chosen[k] - rec.rejected[k];
  return d;
}

// ---------------------------------------------------------------------------
// Datasets

/// An ordered list of comparisons plus an index from user id to record
/// positions. Immutable once built; use PreferenceDataset::Builder.
class PreferenceDataset {
 public:
  using UserIndex = std::map<std::string, std::vector<std::size_t>>;

  class Builder {
   public:
    explicit Builder(std::size_t dim) : dim_(dim) {}
    Builder& add(ComparisonRecord rec) {
      records_.push_back(std::move(rec));
      return *this;
    }
    Builder& add(std::string user, FeatureVector chosen, FeatureVector rejected) {
      return add(ComparisonRecord{std::move(user), std::move(chosen), std::move(rejected)});
    }
    std::size_t size() const noexcept { return records_.size(); }
    PreferenceDataset build() && { return PreferenceDataset(dim_, std::move(records_)); }
    PreferenceDataset build() const& { return PreferenceDataset(dim_, records_); }

   private:
    std::size_t dim_;
    std::vector<ComparisonRecord> records_;
  };

  PreferenceDataset() = default;
  PreferenceDataset(std::size_t dim, std::vector<ComparisonRecord> records)
      : dim_(dim), records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) user_index_[records_[i].user_id].push_back(i);
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::vector<ComparisonRecord>& records() const noexcept { return records_; }
  const ComparisonRecord& operator[](std::size_t i) const { return records_[i]; }
  const UserIndex& user_index() const noexcept { return user_index_; }

  std::vector<std::string> users() const {
    std::vector<std::string> out;
    out.reserve(user_index_.size());
    for (const auto& [u, _] : user_index_) out.push_back(u);
    return out;
  }

  const std::vector<std::size_t>& records_of(const std::string& user) const {
    static const std::vector<std::size_t> none;
    auto it = user_index_.find(user);
    return it == user_index_.end() ? none : it->second;
  }

  /// Records at the given positions, in that order.
  std::vector<ComparisonRecord> select(std::span<const std::size_t> positions) const {
    std::vector<ComparisonRecord> out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(records_.at(p));
    return out;
  }

  PreferenceDataset subset(std::span<const std::size_t> positions) const {
    return PreferenceDataset(dim_, select(positions));
  }

  friend bool operator==(const PreferenceDataset& a, const PreferenceDataset& b) {
    return a.dim_ == b.dim_ && a.records_ == b.records_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<ComparisonRecord> records_;
  UserIndex user_index_;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind { DimensionMismatch, NonFinite, EmptyUser };

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::DimensionMismatch: return "dimension mismatch";
    case ViolationKind::NonFinite: return "non-finite";
    case ViolationKind::EmptyUser: return "empty user";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::size_t record;  // record position; unused for EmptyUser
  std::string detail;
};

using ValidationReport = std::vector<Violation>;

/// Report-based; never throws. An empty report means the dataset is usable.
inline ValidationReport validate_dataset(const PreferenceDataset& data) {
  ValidationReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    if (r.user_id.empty()) report.push_back({ViolationKind::EmptyUser, i, "record has an empty user id"});
    if (r.chosen.size() != data.dim() || r.rejected.size() != data.dim()) {
      report.push_back({ViolationKind::DimensionMismatch, i,
                        "lengths " + std::to_string(r.chosen.size()) + "/" +
                            std::to_string(r.rejected.size()) + ", expected " + std::to_string(data.dim())});
    }
    if (!r.chosen.finite() || !r.rejected.finite())
      report.push_back({ViolationKind::NonFinite, i, "record contains NaN or Inf"});
  }
  if (data.dim() == 0) report.push_back({ViolationKind::DimensionMismatch, 0, "dataset dimension is 0"});
  return report;
}

inline void require_valid(const PreferenceDataset& data) {
  auto report = validate_dataset(data);
  if (!report.empty()) {
    const auto& v = report.front();
    throw DataError(std::string("invalid dataset: ") + to_string(v.kind) + " at record " +
                    std::to_string(v.record) + " (" + v.detail + ")");
  }
}

// ---------------------------------------------------------------------------
// Splits

/// Seen/unseen users and, per user, a train/test partition of record
/// positions into a single PreferenceDataset. For seen users "train" is
/// D_train and "test" is D_test^seen; for unseen users "train" is the
/// few-shot pool and "test" is D_test^unseen.
struct SplitSpec {
  struct Partition {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    friend bool operator==(const Partition&, const Partition&) = default;
  };

  std::set<std::string> seen_users;
  std::set<std::string> unseen_users;
  std::map<std::string, Partition> partitions;

  const Partition& partition(const std::string& user) const {
    auto it = partitions.find(user);
    if (it == partitions.end()) throw DataError("split has no partition for user '" + user + "'");
    return it->second;
  }

  bool is_seen(const std::string& user) const { return seen_users.contains(user); }

  /// Positions of all train records of the given user group, user-major.
  std::vector<std::size_t> train_positions(const std::set<std::string>& users) const {
    std::vector<std::size_t> out;
    for (const auto& u : users) {
      const auto& p = partition(u).train;
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

/// Checks disjointness of user groups, disjointness of train/test positions,
/// that partitions cover exactly each user's records, and that every record
/// belongs to the user it is filed under. Returns human-readable problems.
inline std::vector<std::string> validate_split(const SplitSpec& split, const PreferenceDataset& data) {
  std::vector<std::string> problems;
  for (const auto& u : split.seen_users)
    if (split.unseen_users.contains(u)) problems.push_back("user '" + u + "' is both seen and unseen");
  std::vector<int> owner(data.size(), 0);
  for (const auto& [user, part] : split.partitions) {
    if (!split.seen_users.contains(user) && !split.unseen_users.contains(user))
      problems.push_back("partition for unknown user '" + user + "'");
    std::set<std::size_t> mine;
    for (const auto* side : {&part.train, &part.test}) {
      for (auto p : *side) {
        if (p >= data.size()) {
          problems.push_back("position " + std::to_string(p) + " out of range");
          continue;
        }
        if (data[p].user_id != user)
          problems.push_back("record " + std::to_string(p) + " filed under wrong user '" + user + "'");
        if (++owner[p] > 1) problems.push_back("record " + std::to_string(p) + " appears twice");
        mine.insert(p);
      }
    }
    const auto& all = data.records_of(user);
    if (std::set<std::size_t>(all.begin(), all.end()) != mine)
      problems.push_back("partition of user '" + user + "' does not cover its records");
  }
  for (const auto* group : {&split.seen_users, &split.unseen_users})
    for (const auto& u : *group)
      if (!split.partitions.contains(u)) problems.push_back("no partition for user '" + u + "'");
  return problems;
}

// ---------------------------------------------------------------------------
// Model parameters

/// R_phi(x, y) = A e(x, y) with A of shape B x D.
class RewardBasisModel {
 public:
  RewardBasisModel() = default;
  explicit RewardBasisModel(Matrix basis) : basis_(std::move(basis)) {
    if (basis_.rows() == 0) throw DimensionError("reward basis needs at least one row");
    if (basis_.rows() > basis_.cols())
      throw DimensionError("reward basis rank " + std::to_string(basis_.rows()) + " exceeds feature dim " +
                           std::to_string(basis_.cols()));
    if (!all_finite(basis_.flat())) throw DataError("reward basis has non-finite entries");
  }

  std::size_t rank() const noexcept { return basis_.rows(); }
  std::size_t dim() const noexcept { return basis_.cols(); }
  const Matrix& basis() const noexcept { return basis_; }

  friend bool operator==(const RewardBasisModel&, const RewardBasisModel&) = default;

 private:
  Matrix basis_;
};

/// A point on the (B-1)-simplex.
class UserWeights {
 public:
  static constexpr double kSumTolerance = 1e-9;

  UserWeights() = default;
  explicit UserWeights(Vector w) : w_(std::move(w)) {
    if (w_.empty()) throw DimensionError("user weights must be non-empty");
    double sum = 0.0;
    for (double v : w_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("user weight entries must be finite and >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) throw DataError("user weights do not sum to 1");
  }

  static UserWeights uniform(std::size_t b) { return UserWeights(Vector(b, 1.0 / static_cast<double>(b))); }
  static UserWeights one_hot(std::size_t b, std::size_t k) {
    Vector w(b, 0.0);
    w.at(k) = 1.0;
    return UserWeights(std::move(w));
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> values() const noexcept { return w_; }

  friend bool operator==(const UserWeights&, const UserWeights&) = default;

 private:
  Vector w_;
};

inline bool on_simplex(std::span<const double> w, double tol = UserWeights::kSumTolerance) {
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return !w.empty() && std::abs(sum - 1.0) <= tol;
}

using WeightTable = std::map<std::string, UserWeights>;

}  // namespace lore
