#pragma once

// Run configuration: a flat "key = value" document, one entry per line,
// '#' starts a comment. Unknown keys and ill-typed values are rejected.
// Every key has a default; see RunConfig::describe().

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lore/baselines.hpp"
#include "lore/io.hpp"
#include "lore/policy_basis.hpp"
#include "lore/synth.hpp"
#include "lore/trainer.hpp"

namespace lore {

struct RunConfig {
  std::uint64_t seed = 0;

  // generator
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
  std::string label_noise = "deterministic";

  // joint training
  std::size_t rank = 5;
  double lr_joint = 0.5;
  std::size_t epochs_joint = 500;
  std::size_t batch_size = 0;
  double tolerance = 1e-8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // few-shot
  double lr_fewshot = 0.1;
  std::size_t epochs_fewshot = 1000;

  // BT baseline
  double lr_bt = 0.5;
  std::size_t epochs_bt = 500;

  // evaluation
  std::string curve_counts = "1,3,5,7,9";
  std::size_t curve_repeats = 20;
  std::string rank_candidates = "2,5,10,20";
  double validation_fraction = 0.2;

  // tabular policy basis
  std::size_t policy_prompts = 5;
  std::size_t policy_responses = 6;
  std::size_t policy_basis_true = 2;
  std::size_t policy_rank = 2;
  double policy_alpha = 0.001;
  double policy_beta = 1.0;
  double policy_lr = 0.5;
  std::size_t policy_epochs = 500;
  double policy_init_noise = 0.1;
  std::size_t policy_users = 20;
  std::size_t policy_unseen = 20;
  std::size_t policy_records_per_user = 30;
  std::size_t policy_fewshot = 10;
  std::size_t policy_test = 30;
  std::string policy_ref;  // optional LORE-TAB file supplying the reference policy

  struct Field {
    std::string key;
    std::string help;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
  };

  static const std::vector<Field>& fields();

  /// Applies a config document on top of the current values.
  void parse(std::string_view text, const std::string& source = "config");

  static RunConfig load(const io::fs::path& path) {
    RunConfig c;
    c.parse(io::read_file(path), path.string());
    return c;
  }

  /// Canonical "key = value" rendering of every key except seed.
  std::string canonical() const {
    std::string out;
    for (const auto& f : fields()) {
      if (f.key == "seed") continue;
      out += f.key + " = " + f.get(*this) + "\n";
    }
    return out;
  }

  std::string fingerprint() const { return io::format_hex64(fnv1a(canonical())); }

  GeneratorConfig generator() const {
    GeneratorConfig g;
    g.seed = seed;
    g.dim = dim;
    g.basis_true = basis_true;
    g.alpha = alpha;
    g.n_seen = n_seen;
    g.n_unseen = n_unseen;
    g.prompts_train = prompts_train;
    g.prompts_test = prompts_test;
    g.responses_per_prompt = responses_per_prompt;
    g.comparisons_per_seen_user = comparisons_per_seen_user;
    g.fewshot_per_unseen_user = fewshot_per_unseen_user;
    g.label_noise = label_noise == "bt_sample" ? LabelMode::BtSample : LabelMode::Deterministic;
    return g;
  }

  JointConfig joint() const {
    return {rank, lr_joint, epochs_joint, tolerance, batch_size, seed, adam_beta1, adam_beta2, adam_eps};
  }

  FewShotConfig fewshot() const { return {lr_fewshot, epochs_fewshot, tolerance, adam_beta1, adam_beta2, adam_eps}; }

  BtConfig bt() const { return {lr_bt, epochs_bt, tolerance, seed, adam_beta1, adam_beta2, adam_eps}; }

  PolicyConfig policy() const {
    return {policy_rank, policy_beta, policy_lr,  policy_epochs, tolerance,
            seed,        policy_init_noise, adam_beta1, adam_beta2, adam_eps};
  }

  TabularInstanceConfig tabular_instance() const {
    return {seed,         policy_prompts, policy_responses, policy_basis_true, policy_alpha,
            policy_users, policy_unseen,  policy_records_per_user, policy_fewshot, policy_test};
  }
};

inline std::vector<std::size_t> parse_count_list(std::string_view s, std::string_view what) {
  std::vector<std::size_t> out;
  std::size_t i = 0;
  while (i <= s.size()) {
    auto j = s.find(',', i);
    if (j == std::string_view::npos) j = s.size();
    auto item = s.substr(i, j - i);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    out.push_back(static_cast<std::size_t>(io::parse_u64(item, what)));
    i = j + 1;
  }
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
RunConfig::Field make_field(std::string key, std::string help, T RunConfig::*member) {
  RunConfig::Field f;
  f.key = key;
  f.help = std::move(help);
  f.get = [member](const RunConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, std::string>)
      return c.*member;
    else if constexpr (std::is_same_v<T, double>)
      return io::format_number(c.*member);
    else
      return std::to_string(c.*member);
  };
  f.set = [member, key](RunConfig& c, std::string_view v) {
    if constexpr (std::is_same_v<T, std::string>)
      c.*member = std::string(v);
    else if constexpr (std::is_same_v<T, double>) {
      const double x = io::parse_double(v, key);
      if (!std::isfinite(x)) throw DataError(key + ": value must be finite");
      c.*member = x;
    } else
      c.*member = static_cast<T>(io::parse_u64(v, key));
  };
  return f;
}

}  // namespace detail

inline const std::vector<RunConfig::Field>& RunConfig::fields() {
  using detail::make_field;
  static const std::vector<Field> all = {
      make_field("seed", "master seed (overridden by --seed)", &RunConfig::seed),
      make_field("dim", "feature dimension D", &RunConfig::dim),
      make_field("basis_true", "ground-truth basis count", &RunConfig::basis_true),
      make_field("alpha", "Dirichlet concentration of synthetic users", &RunConfig::alpha),
      make_field("n_seen", "seen users", &RunConfig::n_seen),
      make_field("n_unseen", "unseen users", &RunConfig::n_unseen),
      make_field("prompts_train", "train prompts", &RunConfig::prompts_train),
      make_field("prompts_test", "test prompts (every user labels each)", &RunConfig::prompts_test),
      make_field("responses_per_prompt", "candidates per prompt", &RunConfig::responses_per_prompt),
      make_field("comparisons_per_seen_user", "train comparisons per seen user", &RunConfig::comparisons_per_seen_user),
      make_field("fewshot_per_unseen_user", "few-shot pool per unseen user", &RunConfig::fewshot_per_unseen_user),
      make_field("label_noise", "deterministic | bt_sample", &RunConfig::label_noise),
      make_field("rank", "basis rank B", &RunConfig::rank),
      make_field("lr_joint", "Adam learning rate, joint training", &RunConfig::lr_joint),
      make_field("epochs_joint", "epoch budget, joint training", &RunConfig::epochs_joint),
      make_field("batch_size", "mini-batch size in records (0 = full batch)", &RunConfig::batch_size),
      make_field("tolerance", "early stop when max |param change| over an epoch is below this", &RunConfig::tolerance),
      make_field("adam_beta1", "Adam beta1", &RunConfig::adam_beta1),
      make_field("adam_beta2", "Adam beta2", &RunConfig::adam_beta2),
      make_field("adam_eps", "Adam epsilon", &RunConfig::adam_eps),
      make_field("lr_fewshot", "Adam learning rate, few-shot adaptation", &RunConfig::lr_fewshot),
      make_field("epochs_fewshot", "epoch budget, few-shot adaptation", &RunConfig::epochs_fewshot),
      make_field("lr_bt", "Adam learning rate, BT baseline", &RunConfig::lr_bt),
      make_field("epochs_bt", "epoch budget, BT baseline", &RunConfig::epochs_bt),
      make_field("curve_counts", "comma-separated few-shot counts", &RunConfig::curve_counts),
      make_field("curve_repeats", "repeats per few-shot count", &RunConfig::curve_repeats),
      make_field("rank_candidates", "comma-separated candidate ranks", &RunConfig::rank_candidates),
      make_field("validation_fraction", "held-out share of seen-user records", &RunConfig::validation_fraction),
      make_field("policy_prompts", "tabular prompts", &RunConfig::policy_prompts),
      make_field("policy_responses", "tabular responses per prompt", &RunConfig::policy_responses),
      make_field("policy_basis_true", "ground-truth reward tables", &RunConfig::policy_basis_true),
      make_field("policy_rank", "basis policies B", &RunConfig::policy_rank),
      make_field("policy_alpha", "Dirichlet concentration of tabular users", &RunConfig::policy_alpha),
      make_field("policy_beta", "KL regularization strength beta", &RunConfig::policy_beta),
      make_field("policy_lr", "Adam learning rate, policy basis", &RunConfig::policy_lr),
      make_field("policy_epochs", "epoch budget, policy basis", &RunConfig::policy_epochs),
      make_field("policy_init_noise", "std of basis-logit init noise", &RunConfig::policy_init_noise),
      make_field("policy_users", "seen tabular users", &RunConfig::policy_users),
      make_field("policy_unseen", "unseen tabular users", &RunConfig::policy_unseen),
      make_field("policy_records_per_user", "train comparisons per seen tabular user",
                 &RunConfig::policy_records_per_user),
      make_field("policy_fewshot", "few-shot comparisons per unseen tabular user", &RunConfig::policy_fewshot),
      make_field("policy_test", "test comparisons per tabular user", &RunConfig::policy_test),
      make_field("policy_ref", "LORE-TAB file with the reference policy (empty = uniform)", &RunConfig::policy_ref),
  };
  return all;
}

inline void RunConfig::parse(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw DataError(where + ": expected 'key = value'");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (it == fs.end()) throw DataError(where + ": unknown key '" + key + "'");
    try {
      it->set(*this, value);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  if (label_noise != "deterministic" && label_noise != "bt_sample")
    throw DataError(source + ": label_noise must be 'deterministic' or 'bt_sample'");
  parse_count_list(curve_counts, "curve_counts");
  parse_count_list(rank_candidates, "rank_candidates");
}

}  // namespace lore
