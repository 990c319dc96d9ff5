#include "mmscreen/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "mmscreen/error.hpp"
#include "mmscreen/io.hpp"

namespace mmscreen {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string num(double v) { return std::isnan(v) ? "NA" : io::format_double(v); }

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const json& j, const char* key, Parse parse) {
  if (!j.at(key).is_array()) throw ValidationError(std::string("run config: '") + key + "' must be an array");
  std::vector<T> out;
  for (const auto& e : j.at(key)) out.push_back(parse(e.get<std::string>()));
  if (out.empty()) throw ValidationError(std::string("run config: '") + key + "' is empty");
  return out;
}

void line(std::string& out, const std::vector<std::string>& fields) {
  out += io::join_csv_line(fields);
  out += '\n';
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    const auto j = json::parse(json_text);
    if (!j.is_object()) throw ValidationError("run config must be a JSON object");
    static const std::vector<std::string> known = {"dataset", "out",     "tasks",        "pipelines",  "rules",
                                                   "groups",  "runs",    "seed_base",    "threads",    "permutations",
                                                   "attributes", "mitigate", "keep_predictions"};
    for (const auto& [k, v] : j.items()) {
      if (std::find(known.begin(), known.end(), k) == known.end()) {
        throw ValidationError("run config: unknown key '" + k + "'");
      }
    }
    if (j.contains("dataset")) c.dataset = resolve(j.at("dataset").get<std::string>(), base_dir);
    if (j.contains("out")) c.out = resolve(j.at("out").get<std::string>(), base_dir);
    if (j.contains("tasks")) c.tasks = j.at("tasks").get<std::vector<std::string>>();
    if (j.contains("pipelines")) c.pipelines = parse_list<Pipeline>(j, "pipelines", parse_pipeline);
    if (j.contains("rules")) c.rules = parse_list<FusionRule>(j, "rules", parse_fusion_rule);
    if (j.contains("groups")) c.groups = j.at("groups").get<std::vector<std::string>>();
    if (j.contains("attributes")) {
      c.attributes = parse_list<SensitiveAttribute>(j, "attributes", parse_sensitive_attribute);
    }
    c.runs = j.value("runs", c.runs);
    c.seed_base = j.value("seed_base", c.seed_base);
    c.threads = j.value("threads", c.threads);
    c.permutations = j.value("permutations", c.permutations);
    c.mitigate = j.value("mitigate", c.mitigate);
    c.keep_predictions = j.value("keep_predictions", c.keep_predictions);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  if (c.runs == 0) throw ValidationError("run config: runs must be at least 1");
  if (c.permutations == 0) throw ValidationError("run config: permutations must be at least 1");
  return c;
}

std::string run_config_canonical_json(const RunConfig& c) {
  ordered_json j;
  j["tasks"] = c.tasks;
  j["pipelines"] = json::array();
  for (auto p : c.pipelines) j["pipelines"].push_back(std::string(to_string(p)));
  j["rules"] = json::array();
  for (auto r : c.rules) j["rules"].push_back(std::string(to_string(r)));
  j["groups"] = c.groups;
  j["runs"] = c.runs;
  j["seed_base"] = c.seed_base;
  j["permutations"] = c.permutations;
  j["attributes"] = json::array();
  for (auto a : c.attributes) j["attributes"].push_back(std::string(to_string(a)));
  j["mitigate"] = c.mitigate;
  return j.dump();
}

EvalConfig to_eval_config(const RunConfig& c) {
  EvalConfig e;
  e.pipelines = c.pipelines;
  e.rules = c.rules;
  if (!c.groups.empty()) {
    const auto all = default_fusion_groups();
    e.groups.clear();
    for (const auto& name : c.groups) e.groups.push_back(find_group(all, name));
  }
  e.runs = c.runs;
  e.seed_base = c.seed_base;
  e.threads = c.threads;
  e.permutations = c.permutations;
  e.attributes = c.attributes;
  e.mitigate = c.mitigate;
  e.keep_predictions = c.keep_predictions;
  return e;
}

std::string results_csv(const std::vector<TaskResult>& results) {
  std::string out;
  line(out, {"task", "pipeline", "model", "fused", "auroc_mean", "auroc_ci95", "accuracy_mean", "accuracy_ci95",
             "macro_f1_mean", "macro_f1_ci95", "runs", "auroc_na_folds", "skipped_folds"});
  for (const auto& r : results) {
    for (const auto& m : r.models) {
      line(out, {r.task, std::string(to_string(m.pipeline)), m.model, m.fused ? "1" : "0", num(m.auroc.mean),
                 num(m.auroc.ci_half_width), num(m.accuracy.mean), num(m.accuracy.ci_half_width),
                 num(m.macro_f1.mean), num(m.macro_f1.ci_half_width), std::to_string(m.auroc.per_run.size()),
                 std::to_string(m.auroc.na_folds), std::to_string(r.skipped_folds)});
    }
  }
  return out;
}

std::string predictions_csv(const std::vector<TaskResult>& results) {
  std::string out;
  line(out, {"task", "run", "fold", "pipeline", "model", "participant_id", "label", "score", "pred"});
  for (const auto& r : results) {
    for (const auto& p : r.predictions) {
      line(out, {r.task, std::to_string(p.run), std::to_string(p.fold), std::string(to_string(p.pipeline)), p.model,
                 p.participant_id, std::to_string(p.label), num(p.score), std::to_string(p.pred)});
    }
  }
  return out;
}

std::string shares_csv(const std::vector<TaskResult>& results) {
  std::string out;
  line(out, {"task", "pipeline", "model", "rank", "modality", "dims", "share_mean", "share_ci95", "runs",
             "permutations"});
  for (const auto& r : results) {
    if (!r.shap) continue;
    const auto& s = *r.shap;
    std::vector<std::size_t> order(s.modalities.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.mean[a] > s.mean[b]; });
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto m = order[k];
      line(out, {r.task, std::string(to_string(s.target.pipeline)), s.target.model_name(), std::to_string(k + 1),
                 s.modalities[m], std::to_string(s.dims[m]), num(s.mean[m]), num(s.ci_half_width[m]),
                 std::to_string(s.per_run.size()), std::to_string(s.permutations)});
    }
  }
  return out;
}

std::string fairness_csv(const std::vector<TaskResult>& results, std::string_view phase) {
  std::string out;
  line(out, {"task", "pipeline", "model", "attribute", "quantity", "group", "mean", "ci95", "runs", "na_runs",
             "four_fifths", "method"});
  for (const auto& r : results) {
    if (!r.fairness) continue;
    const auto& f = *r.fairness;
    for (const auto& q : f.quantities) {
      if (q.phase != phase) continue;
      std::string verdict;
      if ((q.quantity == "EOR" || q.quantity == "DPR") && !std::isnan(q.summary.mean)) {
        verdict = four_fifths_fair(q.summary.mean) ? "fair" : "unfair";
      }
      line(out, {r.task, std::string(to_string(f.target.pipeline)), f.target.model_name(), q.attribute, q.quantity,
                 q.group, num(q.summary.mean), num(q.summary.ci_half_width), std::to_string(q.summary.per_run.size()),
                 std::to_string(q.na_runs), verdict, phase == "post" ? f.method : "none"});
    }
  }
  return out;
}

std::string manifest_json(std::string_view command, const RunConfig& config, const std::vector<TaskResult>& results,
                          const std::vector<std::string>& files) {
  const auto canonical = run_config_canonical_json(config);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(io::fnv1a64(canonical)));
  ordered_json j;
  j["tool"] = "mmscreen";
  j["version"] = std::string(kVersion);
  j["command"] = std::string(command);
  j["config_hash"] = hash;
  j["config"] = ordered_json::parse(canonical);
  j["seed_base"] = config.seed_base;
  j["seeds"] = "seed_base + run";
  j["tasks"] = json::array();
  for (const auto& r : results) {
    ordered_json t;
    t["task"] = r.task;
    t["participants"] = r.participants;
    t["positives"] = r.positives;
    t["skipped_folds"] = r.skipped_folds;
    t["hmm_truncations"] = r.hmm_truncations;
    if (r.shap) t["explained"] = std::string(to_string(r.shap->target.pipeline)) + "/" + r.shap->target.model_name();
    if (r.fairness) {
      t["audited"] = std::string(to_string(r.fairness->target.pipeline)) + "/" + r.fairness->target.model_name();
    }
    j["tasks"].push_back(t);
  }
  j["files"] = files;
  return j.dump(2) + "\n";
}

}  // namespace mmscreen
