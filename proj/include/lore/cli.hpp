#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
// validation error.
//
// Pipeline layout:
//   simulate  -> <out>/data.lore, split.txt, truth.txt, manifest.txt
//   train     -> <out>/lore.ckpt, bt.ckpt, train_log.csv, manifest.txt
//   adapt     -> <out>/unseen.ckpt
//   eval      -> <out>/report.csv, per_user.csv (+ table on stdout)
//   curve     -> <out>/curve.csv
//   select-rank -> <out>/select_rank.csv
//   policy    -> <out>/policy.tab, policy.ckpt, policy_report.csv
//   params    -> stdout

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lore/lore.hpp"

namespace lore::cli {

namespace fs = std::filesystem;

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline RunConfig resolve_config(const Common& c, bool required) {
  if (c.config.empty()) {
    if (required) throw UsageError("--config is required");
    RunConfig rc;
    if (c.seed) rc.seed = *c.seed;
    return rc;
  }
  if (!fs::exists(c.config)) throw DataError("config file not found: '" + c.config + "'");
  RunConfig rc = RunConfig::load(c.config);
  if (c.seed) rc.seed = *c.seed;
  return rc;
}

inline fs::path require_out(const Common& c) {
  if (c.out.empty()) throw UsageError("--out is required");
  return c.out;
}

inline std::string manifest(const RunConfig& rc, const std::string& command) {
  return "command " + command + "\nseed " + std::to_string(rc.seed) + "\nfingerprint " + rc.fingerprint() + "\n" +
         rc.canonical();
}

struct Benchdir {
  PreferenceDataset data;
  SplitSpec split;
  std::optional<GroundTruth> truth;
};

inline Benchdir load_benchdir(const fs::path& dir) {
  Benchdir b;
  b.data = io::load_dataset(dir / "data.lore");
  b.split = io::load_split(dir / "split.txt");
  if (fs::exists(dir / "truth.txt")) b.truth = io::load_truth(dir / "truth.txt");
  require_valid(b.data);
  if (auto problems = validate_split(b.split, b.data); !problems.empty())
    throw DataError("split does not match dataset: " + problems.front());
  return b;
}

inline RewardBasisModel load_model(const fs::path& path, io::CheckpointMethod expect) {
  auto ck = io::load_checkpoint(path);
  if (ck.method != expect)
    throw DataError("'" + path.string() + "' holds a " + io::to_string(ck.method) + " checkpoint, expected " +
                    io::to_string(expect));
  return *ck.model;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string num(double v) { return io::format_number(v); }

inline std::string report_header() {
  return "method,seen,unseen,overall,seen_users,unseen_users,seen_records,unseen_records,aggregation,fingerprint,"
         "seed\n";
}

inline std::string report_row(const EvalReport& r, std::uint64_t seed) {
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  return r.method + "," + opt(r.seen) + "," + opt(r.unseen) + "," + num(r.overall) + "," +
         std::to_string(r.seen_users) + "," + std::to_string(r.unseen_users) + "," + std::to_string(r.seen_records) +
         "," + std::to_string(r.unseen_records) + ",per-user-mean," + r.fingerprint + "," + std::to_string(seed) + "\n";
}

inline std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void print_table(std::ostream& os, const std::vector<EvalReport>& reports) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %8s %8s %8s\n", "method", "seen", "unseen", "overall");
  os << buf;
  for (const auto& r : reports) {
    auto pct = [](const std::optional<double>& v) { return v ? *v * 100.0 : std::nan(""); };
    std::snprintf(buf, sizeof buf, "%-8s %8.2f %8.2f %8.2f\n", r.method.c_str(), pct(r.seen), pct(r.unseen),
                  r.overall * 100.0);
    os << buf;
  }
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_simulate(const Common& c, std::ostream& os) {
  const RunConfig rc = resolve_config(c, true);
  const fs::path out = require_out(c);
  const Benchmark bench = build_benchmark(rc.generator());
  io::save_dataset(bench.data, out / "data.lore");
  io::save_split(bench.split, out / "split.txt");
  io::save_truth(bench.truth, out / "truth.txt");
  io::write_file_atomic(out / "manifest.txt", manifest(rc, "simulate"));
  os << "wrote " << bench.data.size() << " records (" << bench.split.seen_users.size() << " seen, "
     << bench.split.unseen_users.size() << " unseen users) to " << out.string() << "\n";
  return kOk;
}

inline int cmd_train(const Common& c, const std::string& data_dir, std::ostream& os) {
  const RunConfig rc = resolve_config(c, true);
  const fs::path out = require_out(c);
  const Benchdir bd = load_benchdir(data_dir);
  const TrainedModel tm = train_joint(bd.data, bd.split, rc.joint());
  const auto train_set = bd.data.subset(bd.split.train_positions(bd.split.seen_users));
  const LinearRewardModel bt = train_bt(train_set, rc.bt());

  io::Checkpoint lore_ck{io::CheckpointMethod::Lore, rc.seed, rc.fingerprint(), tm.model, std::nullopt,
                         tm.seen_weights};
  io::save_checkpoint(lore_ck, out / "lore.ckpt");
  io::Checkpoint bt_ck{io::CheckpointMethod::Bt, rc.seed, rc.fingerprint(), as_basis(bt), std::nullopt, {}};
  io::save_checkpoint(bt_ck, out / "bt.ckpt");

  std::string log = "epoch,objective,best,wall_seconds\n";
  const auto& t = tm.telemetry;
  for (std::size_t e = 0; e < t.objective.size(); ++e)
    log += std::to_string(e) + "," + num(t.objective[e]) + "," + num(t.best[e]) + "," + num(t.wall_seconds[e]) + "\n";
  io::write_file_atomic(out / "train_log.csv", log);
  io::write_file_atomic(out / "manifest.txt", manifest(rc, "train"));
  os << "trained rank " << rc.rank << " basis on " << bd.split.seen_users.size() << " seen users, "
     << t.epochs_run << " epochs, final objective " << num(t.objective.back()) << "\n";
  return kOk;
}

inline int cmd_adapt(const Common& c, const std::string& data_dir, const std::string& model_dir, std::ostream& os) {
  const RunConfig rc = resolve_config(c, true);
  const fs::path out = require_out(c);
  const fs::path mdir = model_dir.empty() ? out : fs::path(model_dir);
  const Benchdir bd = load_benchdir(data_dir);
  const RewardBasisModel model = load_model(mdir / "lore.ckpt", io::CheckpointMethod::Lore);
  const WeightTable unseen = adapt_unseen_users(model, bd.data, bd.split, rc.fewshot());
  io::save_checkpoint({io::CheckpointMethod::Lore, rc.seed, rc.fingerprint(), model, std::nullopt, unseen},
                      out / "unseen.ckpt");
  os << "adapted " << unseen.size() << " unseen users\n";
  return kOk;
}

inline int cmd_eval(const Common& c, const std::string& data_dir, const std::string& model_dir, std::ostream& os) {
  const RunConfig rc = resolve_config(c, false);
  const fs::path out = require_out(c);
  const fs::path mdir = model_dir.empty() ? out : fs::path(model_dir);
  const Benchdir bd = load_benchdir(data_dir);
  const auto fp = rc.fingerprint();

  const auto lore_ck = io::load_checkpoint(mdir / "lore.ckpt");
  if (lore_ck.method != io::CheckpointMethod::Lore) throw DataError("lore.ckpt is not a lore checkpoint");
  WeightTable unseen;
  if (fs::exists(mdir / "unseen.ckpt")) {
    unseen = io::load_checkpoint(mdir / "unseen.ckpt").weights;
  } else {
    unseen = adapt_unseen_users(*lore_ck.model, bd.data, bd.split, rc.fewshot());
  }
  std::vector<EvalReport> reports;
  reports.push_back(evaluate_split(*lore_ck.model, lore_ck.weights, unseen, bd.split, bd.data, "lore", fp));
  if (fs::exists(mdir / "bt.ckpt")) {
    const auto bt = load_model(mdir / "bt.ckpt", io::CheckpointMethod::Bt);
    reports.push_back(evaluate_shared(bt, UserWeights::uniform(1), bd.split, bd.data, "bt", fp));
  }
  if (bd.truth) {
    const RewardBasisModel ref = as_basis(LinearRewardModel{mean_basis_row(bd.truth->true_basis)});
    reports.push_back(evaluate_shared(ref, UserWeights::uniform(1), bd.split, bd.data, "ref", fp));
  }

  std::string csv = report_header();
  std::string per_user = "method,user,group,accuracy\n";
  for (const auto& r : reports) {
    csv += report_row(r, rc.seed);
    for (const auto& [u, acc] : r.per_user)
      per_user += r.method + "," + quote_csv(u) + "," + (bd.split.is_seen(u) ? "seen" : "unseen") + "," + num(acc) +
                  "\n";
  }
  io::write_file_atomic(out / "report.csv", csv);
  io::write_file_atomic(out / "per_user.csv", per_user);
  print_table(os, reports);
  return kOk;
}

inline int cmd_curve(const Common& c, const std::string& data_dir, const std::string& model_dir, std::ostream& os) {
  const RunConfig rc = resolve_config(c, true);
  const fs::path out = require_out(c);
  const fs::path mdir = model_dir.empty() ? out : fs::path(model_dir);
  const Benchdir bd = load_benchdir(data_dir);
  const RewardBasisModel model = load_model(mdir / "lore.ckpt", io::CheckpointMethod::Lore);
  const auto counts = parse_count_list(rc.curve_counts, "curve_counts");
  const auto curve = fewshot_curve(model, bd.data, bd.split, counts, rc.curve_repeats, rc.seed, rc.fewshot());
  std::string csv = "count,mean,std,repeats,fingerprint,seed\n";
  for (const auto& p : curve) {
    csv += std::to_string(p.count) + "," + num(p.mean) + "," + num(p.std) + "," + std::to_string(rc.curve_repeats) +
           "," + rc.fingerprint() + "," + std::to_string(rc.seed) + "\n";
    char buf[96];
    std::snprintf(buf, sizeof buf, "%4zu  %6.2f +- %.2f\n", p.count, p.mean * 100.0, p.std * 100.0);
    os << buf;
  }
  io::write_file_atomic(out / "curve.csv", csv);
  return kOk;
}

inline int cmd_select_rank(const Common& c, const std::string& data_dir, std::ostream& os) {
  const RunConfig rc = resolve_config(c, true);
  const fs::path out = require_out(c);
  const Benchdir bd = load_benchdir(data_dir);
  const auto candidates = parse_count_list(rc.rank_candidates, "rank_candidates");
  const auto sel = select_rank(bd.data, bd.split, candidates, rc.validation_fraction, rc.joint());
  std::string csv = "rank,validation_accuracy,chosen,fingerprint,seed\n";
  for (const auto& [b, acc] : sel.validation)
    csv += std::to_string(b) + "," + num(acc) + "," + (b == sel.chosen ? "1" : "0") + "," + rc.fingerprint() + "," +
           std::to_string(rc.seed) + "\n";
  io::write_file_atomic(out / "select_rank.csv", csv);
  os << sel.chosen << "\n";
  return kOk;
}

inline int cmd_policy(const Common& c, std::ostream& os) {
  const RunConfig rc = resolve_config(c, true);
  const fs::path out = require_out(c);
  const TabularInstance inst = make_tabular_instance(rc.tabular_instance());
  Matrix ref = uniform_policy(inst.n_prompts, inst.n_responses);
  if (!rc.policy_ref.empty()) {
    ref = io::load_tabular(rc.policy_ref).ref_policy();
    if (ref.rows() != inst.n_prompts || ref.cols() != inst.n_responses)
      throw DimensionError("policy_ref shape does not match policy_prompts x policy_responses");
  }
  const auto train = inst.data.subset(inst.split.train_positions(inst.split.seen_users));
  const PolicyTrainResult res = train_policy_basis(train, ref, rc.policy());

  WeightTable unseen;
  for (const auto& u : inst.split.unseen_users)
    unseen.emplace(u, fewshot_policy_weights(res.policies, inst.data.select(inst.split.partition(u).train),
                                             rc.fewshot()));
  auto group_acc = [&](const std::set<std::string>& users, const WeightTable& table) {
    std::vector<double> accs;
    for (const auto& u : users) {
      const auto& test = inst.split.partition(u).test;
      if (!test.empty()) accs.push_back(policy_accuracy(res.policies, table.at(u), inst.data.select(test)));
    }
    return mean(accs);
  };
  const double seen = group_acc(inst.split.seen_users, res.weights);
  const double unseen_acc = group_acc(inst.split.unseen_users, unseen);

  WeightTable all = res.weights;
  all.insert(unseen.begin(), unseen.end());
  io::save_tabular(res.policies, out / "policy.tab");
  io::save_checkpoint({io::CheckpointMethod::PolicyBasis, rc.seed, rc.fingerprint(), std::nullopt, res.policies, all},
                      out / "policy.ckpt");
  std::string csv = "method,seen,unseen,overall,fingerprint,seed\n";
  csv += "policy-basis," + num(seen) + "," + num(unseen_acc) + "," + num((seen + unseen_acc) / 2.0) + "," +
         rc.fingerprint() + "," + std::to_string(rc.seed) + "\n";
  io::write_file_atomic(out / "policy_report.csv", csv);
  char buf[128];
  std::snprintf(buf, sizeof buf, "policy-basis seen %.2f unseen %.2f overall %.2f\n", seen * 100.0,
                unseen_acc * 100.0, (seen + unseen_acc) * 50.0);
  os << buf;
  return kOk;
}

inline int cmd_params(const std::string& method, std::uint64_t b, std::uint64_t d, std::uint64_t n, std::ostream& os) {
  if (method == "lore")
    os << parameter_count(Method::Lore, b, d, n) << "\n";
  else if (method == "bt")
    os << parameter_count(Method::Bt, b, d, n) << "\n";
  else
    throw UsageError("--method must be 'lore' or 'bt'");
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  CLI::App app{"Low-rank personalized reward modeling toolkit", "lore"};
  app.require_subcommand(1);

  Common common;
  std::string data_dir, model_dir, method = "lore";
  std::uint64_t pb = 1, pd = 1, pn = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "config file (key = value lines)");
    sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    sub->add_option("--out", common.out, "output directory");
  };
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic benchmark");
  auto* train = app.add_subcommand("train", "jointly train the reward basis and seen-user weights");
  auto* adapt = app.add_subcommand("adapt", "few-shot adapt unseen users with the basis frozen");
  auto* eval = app.add_subcommand("eval", "seen/unseen/overall accuracy report");
  auto* curve = app.add_subcommand("curve", "few-shot accuracy sweep");
  auto* select = app.add_subcommand("select-rank", "choose the basis rank by held-out validation");
  auto* policy = app.add_subcommand("policy", "tabular policy-basis pipeline");
  auto* params = app.add_subcommand("params", "learnable parameter count");
  for (auto* s : {simulate, train, adapt, eval, curve, select, policy, params}) add_common(s);
  for (auto* s : {train, adapt, eval, curve, select}) s->add_option("--data", data_dir, "benchmark directory")->required();
  for (auto* s : {adapt, eval, curve}) s->add_option("--model", model_dir, "directory holding lore.ckpt (default: --out)");
  params->add_option("--method", method, "lore | bt");
  params->add_option("--B", pb, "basis rank");
  params->add_option("--D", pd, "feature dimension");
  params->add_option("--N", pn, "number of users");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, os, es);
  } catch (const CLI::ParseError& e) {
    app.exit(e, os, es);
    return kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common, os);
    if (train->parsed()) return cmd_train(common, data_dir, os);
    if (adapt->parsed()) return cmd_adapt(common, data_dir, model_dir, os);
    if (eval->parsed()) return cmd_eval(common, data_dir, model_dir, os);
    if (curve->parsed()) return cmd_curve(common, data_dir, model_dir, os);
    if (select->parsed()) return cmd_select_rank(common, data_dir, os);
    if (policy->parsed()) return cmd_policy(common, os);
    if (params->parsed()) return cmd_params(method, pb, pd, pn, os);
  } catch (const UsageError& e) {
    es << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const Error& e) {
    es << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    es << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace lore::cli
