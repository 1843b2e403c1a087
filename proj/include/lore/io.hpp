#pragma once

// On-disk formats.
//
// LORE-DATA v1 (datasets), binary after a text header line:
//   "LORE-DATA v1 dim=<D> records=<N>\n"
//   N times: u32 LE id length, id bytes (UTF-8), D f32 LE chosen, D f32 LE rejected
// Coordinates are widened to double on load; saving requires every
// coordinate to be exactly representable as float32.
//
// LORE-CKPT v1 (checkpoints), LORE-TAB v1 (tabular policy sets),
// LORE-SPLIT v1 and LORE-TRUTH v1 are line-oriented text. Numbers use the
// shortest decimal form that round-trips a double exactly; user ids are
// written as <byte length>:<bytes>. Checkpoints end with
// "checksum <16 hex digits>", the FNV-1a 64 hash of every preceding byte.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lore/policy_basis.hpp"
#include "lore/rng.hpp"
#include "lore/synth.hpp"
#include "lore/types.hpp"

namespace lore::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write to a sibling temp file, then rename over the target.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Numbers

inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw DataError("cannot format number");
  return std::string(buf, end);
}

inline std::string format_hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw DataError(std::string(what) + ": not a number: '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw DataError(std::string(what) + ": not a non-negative integer: '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Text reader shared by the line formats.

class TextReader {
 public:
  TextReader(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  bool at_end() const { return pos_ >= text_.size(); }
  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(source_ + ": " + msg + " (line " + std::to_string(line_) + ", byte " + std::to_string(pos_) + ")");
  }

  std::string_view line() {
    if (at_end()) fail("unexpected end of file");
    const auto nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) fail("missing newline");
    auto out = text_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    ++line_;
    return out;
  }

  void expect_line(std::string_view want) {
    const auto got = line();
    if (got != want) fail("expected '" + std::string(want) + "', found '" + std::string(got) + "'");
  }

  /// "key value" line; returns value.
  std::string_view keyed(std::string_view key) {
    const auto l = line();
    if (l.size() <= key.size() || l.substr(0, key.size()) != key || l[key.size()] != ' ')
      fail("expected '" + std::string(key) + " <value>'");
    return l.substr(key.size() + 1);
  }

  std::uint64_t keyed_u64(std::string_view key) {
    try {
      return parse_u64(keyed(key), key);
    } catch (const DataError& e) {
      fail(e.what());
    }
  }

  /// Parses "<len>:<bytes>" at the start of a line, returning the id and
  /// the remainder of the line.
  std::pair<std::string, std::string_view> id_and_rest() {
    const auto colon = text_.find(':', pos_);
    if (colon == std::string_view::npos) fail("expected <length>:<id>");
    const auto len = parse_u64_here(text_.substr(pos_, colon - pos_));
    if (colon + 1 + len > text_.size()) fail("truncated user id");
    std::string id(text_.substr(colon + 1, len));
    pos_ = colon + 1 + len;
    const auto rest = line();
    return {std::move(id), rest};
  }

  Vector numbers(std::string_view l, std::size_t expected) {
    Vector out;
    std::size_t i = 0;
    while (i < l.size()) {
      while (i < l.size() && l[i] == ' ') ++i;
      if (i >= l.size()) break;
      auto j = l.find(' ', i);
      if (j == std::string_view::npos) j = l.size();
      try {
        out.push_back(parse_double(l.substr(i, j - i), "number"));
      } catch (const DataError& e) {
        fail(e.what());
      }
      i = j;
    }
    if (out.size() != expected)
      throw DimensionError(source_ + ": dimension mismatch, expected " + std::to_string(expected) + " values, found " +
                           std::to_string(out.size()) + " (line " + std::to_string(line_) + ")");
    return out;
  }

  Matrix matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const Vector v = numbers(line(), cols);
      std::copy(v.begin(), v.end(), m.row(r).begin());
    }
    return m;
  }

 private:
  std::uint64_t parse_u64_here(std::string_view s) {
    try {
      return parse_u64(s, "length");
    } catch (const DataError& e) {
      fail(e.what());
    }
  }

  std::string_view text_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

inline void put_numbers(std::string& out, std::span<const double> xs) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += format_number(xs[i]);
  }
  out += '\n';
}

inline void put_matrix(std::string& out, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) put_numbers(out, m.row(r));
}

inline void put_id(std::string& out, const std::string& id) {
  out += std::to_string(id.size());
  out += ':';
  out += id;
}

// ---------------------------------------------------------------------------
// LORE-DATA v1

inline constexpr std::string_view kDataMagic = "LORE-DATA v1";

inline std::string encode_dataset(const PreferenceDataset& data) {
  std::string out;
  out += std::string(kDataMagic) + " dim=" + std::to_string(data.dim()) + " records=" + std::to_string(data.size()) +
         "\n";
  auto put_u32 = [&](std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out += static_cast<char>((v >> s) & 0xFF);
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    if (r.chosen.size() != data.dim() || r.rejected.size() != data.dim())
      throw DimensionError("save_dataset: record " + std::to_string(i) + " has the wrong dimension");
    put_u32(static_cast<std::uint32_t>(r.user_id.size()));
    out += r.user_id;
    for (const auto* fv : {&r.chosen, &r.rejected}) {
      for (double v : fv->values()) {
        const auto f = static_cast<float>(v);
        if (static_cast<double>(f) != v && !(std::isnan(v) && std::isnan(f)))
          throw DataError("save_dataset: coordinate of record " + std::to_string(i) +
                          " is not exactly representable as float32");
        put_u32(std::bit_cast<std::uint32_t>(f));
      }
    }
  }
  return out;
}

inline PreferenceDataset decode_dataset(std::string_view bytes, const std::string& source = "dataset") {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos || bytes.substr(0, kDataMagic.size()) != kDataMagic)
    throw DataError(source + ": bad magic (expected '" + std::string(kDataMagic) + "')");
  const std::string header(bytes.substr(0, nl));
  std::size_t dim = 0, count = 0;
  {
    std::istringstream hs(header.substr(kDataMagic.size()));
    std::string a, b;
    hs >> a >> b;
    if (a.rfind("dim=", 0) != 0 || b.rfind("records=", 0) != 0 || !hs.eof())
      throw DataError(source + ": malformed header '" + header + "'");
    dim = parse_u64(std::string_view(a).substr(4), "dim");
    count = parse_u64(std::string_view(b).substr(8), "records");
  }
  if (dim == 0) throw DataError(source + ": dim must be positive");
  std::size_t pos = nl + 1;
  auto need = [&](std::size_t n, std::size_t rec) {
    if (pos + n > bytes.size())
      throw DataError(source + ": truncated record " + std::to_string(rec) + " at byte offset " + std::to_string(pos));
  };
  auto get_u32 = [&] {
    std::uint32_t v = 0;
    for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << s;
    return v;
  };
  std::vector<ComparisonRecord> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    need(4, i);
    const std::uint32_t len = get_u32();
    need(len, i);
    ComparisonRecord rec;
    rec.user_id.assign(bytes.substr(pos, len));
    pos += len;
    if (rec.user_id.empty()) throw DataError(source + ": empty user id in record " + std::to_string(i));
    need(8 * dim, i);
    for (auto* fv : {&rec.chosen, &rec.rejected}) {
      Vector v(dim);
      for (auto& x : v) {
        x = static_cast<double>(std::bit_cast<float>(get_u32()));
        if (!std::isfinite(x))
          throw DataError(source + ": non-finite coordinate in record " + std::to_string(i) + " at byte offset " +
                          std::to_string(pos - 4));
      }
      *fv = FeatureVector(std::move(v));
    }
    records.push_back(std::move(rec));
  }
  if (pos != bytes.size())
    throw DataError(source + ": " + std::to_string(bytes.size() - pos) + " trailing bytes after record " +
                    std::to_string(count));
  return PreferenceDataset(dim, std::move(records));
}

inline void save_dataset(const PreferenceDataset& data, const fs::path& path) {
  write_file_atomic(path, encode_dataset(data));
}

inline PreferenceDataset load_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("dataset file not found: '" + path.string() + "'");
  return decode_dataset(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// LORE-SPLIT v1

inline std::string encode_split(const SplitSpec& split) {
  std::string out = "LORE-SPLIT v1\n";
  out += "users " + std::to_string(split.partitions.size()) + "\n";
  auto put_positions = [&](const char* key, const std::vector<std::size_t>& ps) {
    out += key;
    out += ' ' + std::to_string(ps.size());
    for (auto p : ps) out += ' ' + std::to_string(p);
    out += '\n';
  };
  for (const auto& [user, part] : split.partitions) {
    put_id(out, user);
    out += split.is_seen(user) ? " seen\n" : " unseen\n";
    put_positions("train", part.train);
    put_positions("test", part.test);
  }
  return out;
}

inline SplitSpec decode_split(std::string_view text, const std::string& source = "split") {
  TextReader rd(text, source);
  rd.expect_line("LORE-SPLIT v1");
  const auto n = rd.keyed_u64("users");
  SplitSpec split;
  auto positions = [&](std::string_view key) {
    const auto v = rd.keyed(key);
    std::istringstream ss{std::string(v)};
    std::size_t k = 0;
    if (!(ss >> k)) rd.fail("bad position count");
    std::vector<std::size_t> out(k);
    for (auto& p : out)
      if (!(ss >> p)) rd.fail("missing position");
    std::string extra;
    if (ss >> extra) rd.fail("trailing data after positions");
    return out;
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [id, role] = rd.id_and_rest();
    if (role == " seen")
      split.seen_users.insert(id);
    else if (role == " unseen")
      split.unseen_users.insert(id);
    else
      rd.fail("role must be 'seen' or 'unseen'");
    SplitSpec::Partition p;
    p.train = positions("train");
    p.test = positions("test");
    split.partitions.emplace(id, std::move(p));
  }
  if (!rd.at_end()) rd.fail("trailing data");
  return split;
}

inline void save_split(const SplitSpec& split, const fs::path& path) { write_file_atomic(path, encode_split(split)); }
inline SplitSpec load_split(const fs::path& path) { return decode_split(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// LORE-TRUTH v1 (ground-truth sidecar of synthetic benchmarks)

inline std::string encode_truth(const GroundTruth& truth) {
  std::string out = "LORE-TRUTH v1\n";
  out += "rank " + std::to_string(truth.true_basis.rows()) + "\n";
  out += "dim " + std::to_string(truth.true_basis.cols()) + "\n";
  out += "basis\n";
  put_matrix(out, truth.true_basis);
  out += "users " + std::to_string(truth.user_weights.size()) + "\n";
  for (const auto& [u, w] : truth.user_weights) {
    put_id(out, u);
    out += ' ';
    put_numbers(out, w.values());
  }
  return out;
}

inline GroundTruth decode_truth(std::string_view text, const std::string& source = "truth") {
  TextReader rd(text, source);
  rd.expect_line("LORE-TRUTH v1");
  const auto rank = rd.keyed_u64("rank");
  const auto dim = rd.keyed_u64("dim");
  rd.expect_line("basis");
  GroundTruth t;
  t.true_basis = rd.matrix(rank, dim);
  const auto n = rd.keyed_u64("users");
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [id, rest] = rd.id_and_rest();
    if (rest.empty() || rest[0] != ' ') rd.fail("expected weights after user id");
    t.user_weights.emplace(id, UserWeights(rd.numbers(rest.substr(1), rank)));
  }
  if (!rd.at_end()) rd.fail("trailing data");
  return t;
}

inline void save_truth(const GroundTruth& t, const fs::path& path) { write_file_atomic(path, encode_truth(t)); }
inline GroundTruth load_truth(const fs::path& path) { return decode_truth(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// LORE-TAB v1

inline void put_tabular_body(std::string& out, const TabularPolicySet& set) {
  out += std::to_string(set.n_prompts()) + ' ' + std::to_string(set.n_responses()) + ' ' +
         std::to_string(set.rank()) + ' ' + format_number(set.beta()) + '\n';
  out += "ref\n";
  put_matrix(out, set.ref_policy());
  out += "basis\n";
  for (const auto& l : set.basis_logits()) put_matrix(out, l);
}

inline TabularPolicySet read_tabular_body(TextReader& rd) {
  const auto header = rd.line();
  std::istringstream hs{std::string(header)};
  std::string np_s, nr_s, b_s, beta_s, extra;
  if (!(hs >> np_s >> nr_s >> b_s >> beta_s) || (hs >> extra)) rd.fail("expected '<n_prompts> <n_responses> <B> <beta>'");
  const auto np = parse_u64(np_s, "n_prompts");
  const auto nr = parse_u64(nr_s, "n_responses");
  const auto b = parse_u64(b_s, "B");
  const double beta = parse_double(beta_s, "beta");
  rd.expect_line("ref");
  Matrix ref = rd.matrix(np, nr);
  rd.expect_line("basis");
  std::vector<Matrix> logits;
  for (std::uint64_t j = 0; j < b; ++j) logits.push_back(rd.matrix(np, nr));
  return TabularPolicySet(std::move(ref), std::move(logits), beta);
}

inline std::string encode_tabular(const TabularPolicySet& set) {
  std::string out = "LORE-TAB v1\n";
  put_tabular_body(out, set);
  return out;
}

inline TabularPolicySet decode_tabular(std::string_view text, const std::string& source = "tabular") {
  TextReader rd(text, source);
  rd.expect_line("LORE-TAB v1");
  auto set = read_tabular_body(rd);
  if (!rd.at_end()) rd.fail("trailing data");
  return set;
}

inline void save_tabular(const TabularPolicySet& set, const fs::path& path) {
  write_file_atomic(path, encode_tabular(set));
}
inline TabularPolicySet load_tabular(const fs::path& path) {
  return decode_tabular(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// LORE-CKPT v1

enum class CheckpointMethod { Lore, Bt, PolicyBasis };

inline const char* to_string(CheckpointMethod m) {
  switch (m) {
    case CheckpointMethod::Lore: return "lore";
    case CheckpointMethod::Bt: return "bt";
    case CheckpointMethod::PolicyBasis: return "policy-basis";
  }
  return "?";
}

struct Checkpoint {
  CheckpointMethod method = CheckpointMethod::Lore;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::optional<RewardBasisModel> model;      // lore, bt (rank 1)
  std::optional<TabularPolicySet> policies;   // policy-basis
  WeightTable weights;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::string_view kCheckpointMagic = "LORE-CKPT v1";

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out = std::string(kCheckpointMagic) + "\n";
  out += "method " + std::string(to_string(ck.method)) + "\n";
  out += "seed " + std::to_string(ck.seed) + "\n";
  out += "fingerprint " + (ck.fingerprint.empty() ? std::string("-") : ck.fingerprint) + "\n";
  std::size_t rank = 0;
  if (ck.method == CheckpointMethod::PolicyBasis) {
    if (!ck.policies) throw DataError("save_checkpoint: policy-basis checkpoint without policies");
    rank = ck.policies->rank();
    out += "tabular\n";
    put_tabular_body(out, *ck.policies);
  } else {
    if (!ck.model) throw DataError("save_checkpoint: checkpoint without a model");
    rank = ck.model->rank();
    out += "rank " + std::to_string(rank) + "\n";
    out += "dim " + std::to_string(ck.model->dim()) + "\n";
    out += "basis\n";
    put_matrix(out, ck.model->basis());
  }
  out += "users " + std::to_string(ck.weights.size()) + "\n";
  for (const auto& [u, w] : ck.weights) {
    if (w.size() != rank) throw DimensionError("save_checkpoint: weights of '" + u + "' do not match rank");
    put_id(out, u);
    out += ' ';
    put_numbers(out, w.values());
  }
  out += "checksum " + format_hex64(fnv1a(out)) + "\n";
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view text, const std::string& source = "checkpoint") {
  TextReader rd(text, source);
  const auto magic = rd.line();
  if (magic.substr(0, 10) == "LORE-CKPT " && magic != kCheckpointMagic)
    rd.fail("unsupported checkpoint version '" + std::string(magic) + "'");
  if (magic != kCheckpointMagic) rd.fail("bad magic (expected '" + std::string(kCheckpointMagic) + "')");
  Checkpoint ck;
  const auto method = rd.keyed("method");
  if (method == "lore")
    ck.method = CheckpointMethod::Lore;
  else if (method == "bt")
    ck.method = CheckpointMethod::Bt;
  else if (method == "policy-basis")
    ck.method = CheckpointMethod::PolicyBasis;
  else
    rd.fail("unknown method '" + std::string(method) + "'");
  ck.seed = rd.keyed_u64("seed");
  ck.fingerprint = std::string(rd.keyed("fingerprint"));
  if (ck.fingerprint == "-") ck.fingerprint.clear();
  std::size_t rank = 0;
  if (ck.method == CheckpointMethod::PolicyBasis) {
    rd.expect_line("tabular");
    ck.policies = read_tabular_body(rd);
    rank = ck.policies->rank();
  } else {
    rank = rd.keyed_u64("rank");
    const auto dim = rd.keyed_u64("dim");
    rd.expect_line("basis");
    ck.model = RewardBasisModel(rd.matrix(rank, dim));
  }
  const auto n = rd.keyed_u64("users");
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [id, rest] = rd.id_and_rest();
    if (rest.empty() || rest[0] != ' ') rd.fail("expected weights after user id");
    ck.weights.emplace(id, UserWeights(rd.numbers(rest.substr(1), rank)));
  }
  const std::size_t body_end = rd.offset();
  const auto sum = rd.keyed("checksum");
  if (!rd.at_end()) rd.fail("trailing data after checksum");
  if (sum != format_hex64(fnv1a(text.substr(0, body_end))))
    throw DataError(source + ": checksum mismatch (file is corrupt)");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: '" + path.string() + "'");
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace lore::io
