#include "mmscreen/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "mmscreen/error.hpp"
#include "mmscreen/evaluation.hpp"
#include "mmscreen/io.hpp"
#include "mmscreen/report.hpp"
#include "mmscreen/synthcohort.hpp"

namespace mmscreen {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::string dataset;
  std::string out;
  std::vector<std::string> tasks;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed_base;
};

void add_common(CLI::App* sub, Flags& f, bool with_run_options) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--dataset", f.dataset, "Cohort directory");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--seed-base", f.seed_base, "Seed base (default 42)");
  if (with_run_options) {
    sub->add_option("--runs", f.runs, "Repeated cross-validation runs")->check(CLI::PositiveNumber);
    sub->add_option("--threads", f.threads, "Worker threads (0: all cores)");
    sub->add_option("--task", f.tasks, "Task to run (repeatable; default: all)");
  }
}

RunConfig run_config(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    const fs::path path(f.config);
    c = parse_run_config(io::read_text_file(path), path.parent_path());
  }
  if (!f.dataset.empty()) c.dataset = f.dataset;
  if (!f.out.empty()) c.out = f.out;
  c.dataset = c.dataset.lexically_normal();
  c.out = c.out.lexically_normal();
  if (!f.tasks.empty()) c.tasks = f.tasks;
  if (f.runs) c.runs = *f.runs;
  if (f.threads) c.threads = *f.threads;
  if (f.seed_base) c.seed_base = *f.seed_base;
  if (c.dataset.empty()) throw ValidationError("no dataset given (--dataset or \"dataset\" in --config)");
  if (c.out.empty()) throw ValidationError("no output directory given (--out or \"out\" in --config)");
  return c;
}

std::vector<std::string> task_names(const Cohort& cohort, const RunConfig& c) {
  if (c.tasks.empty()) {
    std::vector<std::string> out;
    for (const auto& t : cohort.tasks()) out.push_back(t.name);
    return out;
  }
  for (const auto& t : c.tasks) (void)cohort.task(t);
  return c.tasks;
}

void check_groups(const Cohort& cohort, const std::string& task, const RunConfig& c) {
  const auto data = task_data(cohort, cohort.task(task));
  for (auto a : c.attributes) {
    const auto spec = cohort.config().sensitive_spec(a);
    std::set<std::string> groups;
    for (auto m : data.members) groups.insert(bin_sensitive(cohort.participants()[m], spec));
    if (groups.size() < 2) {
      throw FairnessUndefinedError(std::string(to_string(a)) + " has a single group (" +
                                   (groups.empty() ? std::string("none") : *groups.begin()) + ") in task " + task);
    }
  }
}

// Reruns only what the target needs; fold plans and per-feature fits depend
// on the seeds alone, so the target's predictions are unchanged.
EvalConfig narrowed(EvalConfig e, const FusionTarget& t) {
  e.pipelines = {t.pipeline};
  e.rules = {t.rule};
  e.groups = {find_group(e.groups, t.group)};
  e.unimodal.clear();
  e.keep_predictions = false;
  return e;
}

void publish(const fs::path& out_dir, std::string_view command, const RunConfig& c,
             const std::vector<TaskResult>& results, std::vector<std::pair<std::string, std::string>> files) {
  std::vector<std::string> names;
  for (const auto& [name, body] : files) names.push_back(name);
  files.emplace_back("manifest.json", manifest_json(command, c, results, names));
  io::StagedOutputs staged;
  for (const auto& [name, body] : files) staged.stage(out_dir / name, body);
  staged.commit();
}

int cmd_synth(const Flags& f, std::ostream& out) {
  auto config = f.config.empty() ? default_synth_config() : parse_synth_config(io::read_text_file(f.config));
  if (f.seed_base) config.seed = *f.seed_base;
  const fs::path target = !f.out.empty() ? fs::path(f.out) : fs::path(f.dataset);
  if (target.empty()) throw ValidationError("synth needs --out DIR");
  auto tmp = target;
  tmp += ".tmp";
  fs::remove_all(tmp);
  try {
    const auto cohort = generate_to(config, tmp);
    io::write_file_atomic(tmp / "synth_config.json", synth_config_to_json(config));
    fs::remove_all(target);
    fs::rename(tmp, target);
    out << "wrote " << cohort.size() << " participants to " << target.string() << "\n";
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
  return 0;
}

int cmd_validate(const Flags& f, std::ostream& out) {
  if (f.dataset.empty()) throw ValidationError("validate needs --dataset DIR");
  const auto cohort = load_cohort(f.dataset);
  out << "participants " << cohort.size() << "\n";
  out << "feature_sets\n";
  for (const auto& mf : modality_menu()) {
    std::size_t present = 0, t_min = 0, t_max = 0;
    for (const auto& p : cohort.participants()) {
      const auto* s = cohort.find_series(p.id, mf.feature_set);
      if (!s) continue;
      const auto t = s->data.rows();
      t_min = present == 0 ? t : std::min(t_min, t);
      t_max = std::max(t_max, t);
      ++present;
    }
    const auto ch = cohort.channels(mf.feature_set);
    out << "  " << mf.name() << " summary=" << to_string(mf.kind) << " participants=" << present
        << " channels=" << (ch ? std::to_string(*ch) : "-") << " T=" << t_min << ".." << t_max << "\n";
  }
  out << "tasks\n";
  for (const auto& t : cohort.tasks()) {
    const auto data = task_data(cohort, t);
    const auto pos = std::count(data.labels.begin(), data.labels.end(), 1);
    out << "  " << t.name << " labeled=" << data.labels.size() << " positive=" << pos
        << " negative=" << data.labels.size() - static_cast<std::size_t>(pos) << "\n";
  }
  return 0;
}

enum class Mode { Evaluate, Explain, Audit };

int cmd_run(const Flags& f, Mode mode, std::ostream& out) {
  const auto c = run_config(f);
  const auto cohort = load_cohort(c.dataset);
  const auto tasks = task_names(cohort, c);
  if (mode == Mode::Audit) {
    for (const auto& t : tasks) check_groups(cohort, t, c);
  }
  const auto eval = to_eval_config(c);
  std::vector<TaskResult> results;
  for (const auto& t : tasks) {
    auto r = run_task(cohort, t, eval);
    if (mode != Mode::Evaluate) {
      const auto target = best_fusion(r);
      auto e = narrowed(eval, target);
      if (mode == Mode::Explain) e.explain = target;
      else e.audit = target;
      auto extra = run_task(cohort, t, e);
      r.shap = std::move(extra.shap);
      r.fairness = std::move(extra.fairness);
    }
    out << t << ": " << r.participants << " labeled, " << r.positives << " positive, " << r.skipped_folds
        << " skipped folds\n";
    results.push_back(std::move(r));
  }

  std::vector<std::pair<std::string, std::string>> files = {{"results.csv", results_csv(results)}};
  const char* command = "evaluate";
  if (mode == Mode::Evaluate && c.keep_predictions) files.emplace_back("predictions.csv", predictions_csv(results));
  if (mode == Mode::Explain) {
    command = "explain";
    files.emplace_back("modality_shares.csv", shares_csv(results));
  }
  if (mode == Mode::Audit) {
    command = "audit";
    files.emplace_back("fairness_pre.csv", fairness_csv(results, "pre"));
    if (c.mitigate) files.emplace_back("fairness_post.csv", fairness_csv(results, "post"));
  }
  publish(c.out, command, c, results, std::move(files));
  out << "wrote " << c.out.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal MCI and well-being screening", "mmscreen"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Flags f;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  add_common(synth, f, false);
  auto* validate = app.add_subcommand("validate", "Load a cohort and print its summary");
  add_common(validate, f, false);
  auto* evaluate = app.add_subcommand("evaluate", "Nested cross-validation of every pipeline and fusion");
  add_common(evaluate, f, true);
  auto* explain = app.add_subcommand("explain", "Modality shares of the best fused model");
  add_common(explain, f, true);
  auto* audit = app.add_subcommand("audit", "Fairness of the best fused model, before and after mitigation");
  add_common(audit, f, true);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(f, out);
    if (validate->parsed()) return cmd_validate(f, out);
    if (evaluate->parsed()) return cmd_run(f, Mode::Evaluate, out);
    if (explain->parsed()) return cmd_run(f, Mode::Explain, out);
    return cmd_run(f, Mode::Audit, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mmscreen
