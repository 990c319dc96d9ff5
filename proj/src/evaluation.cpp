#include "mmscreen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "mmscreen/error.hpp"
#include "mmscreen/parallel.hpp"
#include "mmscreen/rng.hpp"

namespace mmscreen {

// --- folds and metrics -----------------------------------------------------

std::vector<FoldPlan> make_folds(std::size_t n_ids, std::size_t runs, std::uint64_t seed_base) {
  if (n_ids < kOuterFolds) {
    throw ValidationError("make_folds: need at least " + std::to_string(kOuterFolds) + " ids, got " +
                          std::to_string(n_ids));
  }
  std::vector<FoldPlan> plans;
  plans.reserve(runs * kOuterFolds);
  for (std::size_t run = 0; run < runs; ++run) {
    const std::uint64_t seed = seed_base + run;
    std::vector<std::size_t> order(n_ids);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    const std::size_t base = n_ids / kOuterFolds;
    const std::size_t extra = n_ids % kOuterFolds;
    std::size_t start = 0;
    for (std::size_t fold = 0; fold < kOuterFolds; ++fold) {
      const std::size_t size = base + (fold < extra ? 1 : 0);
      FoldPlan p;
      p.run = run;
      p.fold = fold;
      p.seed = seed;
      p.test.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                    order.begin() + static_cast<std::ptrdiff_t>(start + size));
      std::vector<std::size_t> rest(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(start));
      rest.insert(rest.end(), order.begin() + static_cast<std::ptrdiff_t>(start + size), order.end());
      const auto val_size = static_cast<std::size_t>(std::lround(static_cast<double>(rest.size()) / 5.0));
      p.train.assign(rest.begin(), rest.end() - static_cast<std::ptrdiff_t>(val_size));
      p.validation.assign(rest.end() - static_cast<std::ptrdiff_t>(val_size), rest.end());
      plans.push_back(std::move(p));
      start += size;
    }
  }
  return plans;
}

std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw RuntimeError("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive midranks, kept doubled so every term is an integer.
  double twice_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const auto twice_mid = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) twice_rank_sum += twice_mid;
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double u = (twice_rank_sum - p * (p + 1.0)) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw RuntimeError("accuracy: length mismatch");
  if (preds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double macro_f1(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw RuntimeError("macro_f1: length mismatch");
  double total = 0.0;
  for (int cls : {0, 1}) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i] == cls;
      const bool l = labels[i] == cls;
      tp += p && l;
      fp += p && !l;
      fn += !p && l;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    total += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return total / 2.0;
}

double ci_half_width(std::span<const double> per_run) {
  const std::size_t n = per_run.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(per_run.begin(), per_run.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : per_run) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

MetricSummary summarize_metric(std::string name, std::vector<double> per_run, std::size_t na_folds) {
  MetricSummary s;
  s.metric = std::move(name);
  s.na_folds = na_folds;
  s.mean = per_run.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : std::accumulate(per_run.begin(), per_run.end(), 0.0) / static_cast<double>(per_run.size());
  s.ci_half_width = ci_half_width(per_run);
  s.per_run = std::move(per_run);
  return s;
}

std::string FusionTarget::model_name() const { return std::string(to_string(rule)) + ":" + group; }

const ModelResult& TaskResult::model(Pipeline pipeline, std::string_view name) const {
  for (const auto& m : models) {
    if (m.pipeline == pipeline && m.model == name) return m;
  }
  throw RuntimeError("no result for " + std::string(to_string(pipeline)) + "/" + std::string(name));
}

// --- per-fold fitting -----------------------------------------------------

TaskData task_data(const Cohort& cohort, const TaskSpec& spec) {
  TaskData d;
  const auto& ps = cohort.participants();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (auto l = label_for(ps[i], spec)) {
      d.members.push_back(i);
      d.labels.push_back(*l ? 1 : 0);
    }
  }
  return d;
}

namespace {

std::size_t cache_key(const ModalityFeature& mf) { return canonical_index(mf); }

bool needs_fit(const ModalityFeature& mf) {
  return mf.kind == SummaryKind::HmmDynamics || mf.feature_set == FeatureSet::Demographics;
}

const FeatureSeries& series_or_throw(const Cohort& cohort, std::size_t participant, FeatureSet fs) {
  const auto& id = cohort.participants()[participant].id;
  const auto* s = cohort.find_series(id, fs);
  if (!s) {
    throw ValidationError("participant " + id + " has no " + std::string(to_string(fs)) + " series");
  }
  return *s;
}

std::vector<int> gather(std::span<const int> v, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  }
  for (auto& v : out) v /= static_cast<double>(std::max<std::size_t>(m.rows(), 1));
  return out;
}

}  // namespace

SummaryCache::SummaryCache(const Cohort& cohort, std::span<const ModalityFeature> features) {
  for (const auto& mf : features) {
    if (needs_fit(mf)) continue;
    for (std::size_t p = 0; p < cohort.size(); ++p) {
      const auto* s = cohort.find_series(cohort.participants()[p].id, mf.feature_set);
      if (!s) continue;
      std::vector<double> v;
      switch (mf.kind) {
        case SummaryKind::Stats: v = pool_stats(*s).values; break;
        case SummaryKind::Quantiles: v = pool_quantiles(*s, kHrvQuantiles).values; break;
        case SummaryKind::Raw: v = raw_summary(*s).values; break;
        case SummaryKind::HmmDynamics: break;
      }
      values_.emplace(std::make_pair(p, cache_key(mf)), std::move(v));
    }
  }
}

const std::vector<double>& SummaryCache::get(std::size_t participant, const ModalityFeature& mf) const {
  auto it = values_.find({participant, cache_key(mf)});
  if (it == values_.end()) {
    throw ValidationError("participant #" + std::to_string(participant) + " has no " +
                          std::string(to_string(mf.feature_set)) + " series");
  }
  return it->second;
}

FoldFeatureModels fit_fold_feature(const Cohort& cohort, const TaskData& data, const FoldPlan& plan,
                                   const ModalityFeature& mf, const SummaryCache& cache, const EvalConfig& config,
                                   std::size_t* truncations) {
  FoldFeatureModels out;
  out.feature = mf;
  const auto& ps = cohort.participants();
  auto cohort_index = [&](std::size_t k) { return data.members[k]; };

  std::function<std::vector<double>(std::size_t)> summarize;
  if (mf.feature_set == FeatureSet::Demographics) {
    std::vector<const ParticipantRecord*> train;
    for (auto k : plan.train) train.push_back(&ps[cohort_index(k)]);
    out.encoder.emplace(train);
    summarize = [&](std::size_t k) { return out.encoder->encode(ps[cohort_index(k)]); };
  } else if (mf.kind == SummaryKind::HmmDynamics) {
    std::vector<const FeatureSeries*> train;
    for (auto k : plan.train) train.push_back(&series_or_throw(cohort, cohort_index(k), mf.feature_set));
    HmmFitOptions opts = config.hmm;
    opts.seed = plan.seed;
    out.hmm = fit_hmm(train, opts);
    summarize = [&](std::size_t k) {
      return hmm_dynamics(*out.hmm, series_or_throw(cohort, cohort_index(k), mf.feature_set), truncations).values;
    };
  } else {
    summarize = [&](std::size_t k) { return cache.get(cohort_index(k), mf); };
  }

  auto build = [&](const std::vector<std::size_t>& ks) {
    Matrix m;
    for (auto k : ks) {
      auto row = summarize(k);
      if (m.rows() > 0 && row.size() != m.cols()) {
        throw ValidationError(mf.name() + ": summarized dimension differs between participants");
      }
      m.append_row(row);
    }
    return m;
  };
  Matrix train = build(plan.train);
  Matrix val = build(plan.validation);
  Matrix test = build(plan.test);
  out.standardizer = fit_standardizer(train);
  out.train = out.standardizer.apply(train);
  out.validation = val.rows() ? out.standardizer.apply(val) : val;
  out.test = out.standardizer.apply(test);

  const auto y = gather(data.labels, plan.train);
  for (auto pipeline : config.pipelines) {
    LearnerSpec spec;
    spec.kind = route(mf, out.train.cols(), pipeline);
    spec.lr = config.lr;
    spec.gbdt = config.gbdt;
    spec.svm = config.svm;
    spec.rf = config.rf;
    spec.seed = plan.seed;
    out.learners.emplace(pipeline, fit_learner(out.train, y, spec));
  }
  return out;
}

// --- the harness ----------------------------------------------------------

namespace {

struct FoldMetrics {
  std::optional<double> auroc;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct AuditData {
  std::vector<double> val_scores, test_scores;
  std::vector<int> val_labels, test_labels;
  std::vector<std::size_t> val_members, test_members;  // cohort indices
};

struct UnitOutput {
  FoldArtifact artifact;
  std::map<std::string, FoldMetrics> metrics;  // key "<pipeline>/<model>"
  std::vector<PredictionRow> rows;
  std::vector<double> shap_global;  // over all group members, zeros for inactive ones
  std::optional<AuditData> audit;
  std::size_t truncations = 0;
};

std::string key_of(Pipeline p, const std::string& model) { return std::string(to_string(p)) + "/" + model; }

using ProbMap = std::map<ModalityFeature, std::vector<double>, CanonicalOrder>;

struct FusedSeries {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<ModalityFeature> active;
};

FusedSeries fuse_series(const FusionConfig& cfg, const ProbMap& probs, std::size_t n,
                        const std::map<ModalityFeature, std::optional<double>, CanonicalOrder>& val_auc) {
  FusedSeries out;
  std::map<ModalityFeature, double, CanonicalOrder> row;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& mf : cfg.members) row[mf] = probs.at(mf)[i];
    auto d = fuse(cfg, row, val_auc);
    out.scores.push_back(d.score);
    out.labels.push_back(d.label);
    if (i == 0) out.active = d.selected;
  }
  if (n == 0) {
    if (cfg.rule == FusionRule::Selective) {
      std::map<ModalityFeature, std::optional<double>, CanonicalOrder> aucs;
      for (const auto& mf : cfg.members) {
        auto it = val_auc.find(mf);
        aucs[mf] = it == val_auc.end() ? std::nullopt : it->second;
      }
      out.active = select_members(aucs);
    } else {
      out.active = cfg.members;
    }
  }
  return out;
}

UnitOutput run_unit(const Cohort& cohort, const TaskData& data, const FoldPlan& plan,
                    const std::vector<ModalityFeature>& features, const SummaryCache& cache,
                    const EvalConfig& config) {
  UnitOutput out;
  out.artifact.run = plan.run;
  out.artifact.fold = plan.fold;
  const auto y_train = gather(data.labels, plan.train);
  const auto y_val = gather(data.labels, plan.validation);
  const auto y_test = gather(data.labels, plan.test);

  std::map<ModalityFeature, FoldFeatureModels, CanonicalOrder> fitted;
  try {
    for (const auto& mf : features) {
      fitted.emplace(mf, fit_fold_feature(cohort, data, plan, mf, cache, config, &out.truncations));
    }
  } catch (const DegenerateFoldError& e) {
    out.artifact.skipped = true;
    out.artifact.skip_reason = e.what();
    return out;
  }

  const auto& ps = cohort.participants();
  auto emit_rows = [&](Pipeline p, const std::string& model, std::span<const double> scores,
                       std::span<const int> preds) {
    if (!config.keep_predictions) return;
    for (std::size_t i = 0; i < plan.test.size(); ++i) {
      out.rows.push_back({plan.run, plan.fold, p, model, ps[data.members[plan.test[i]]].id, y_test[i], scores[i],
                          preds[i]});
    }
  };
  auto record = [&](Pipeline p, const std::string& model, std::span<const double> scores,
                    std::span<const int> preds) {
    FoldMetrics m;
    m.auroc = auroc(scores, y_test);
    m.accuracy = accuracy(preds, y_test);
    m.macro_f1 = macro_f1(preds, y_test);
    const auto key = key_of(p, model);
    out.metrics[key] = m;
    out.artifact.test_auroc[key] = m.auroc;
    emit_rows(p, model, scores, preds);
  };

  for (auto pipeline : config.pipelines) {
    ProbMap val_probs, test_probs;
    std::map<ModalityFeature, std::optional<double>, CanonicalOrder> val_auc;
    for (auto& [mf, ff] : fitted) {
      const auto& model = ff.learners.at(pipeline);
      val_probs[mf] = ff.validation.rows() ? model.predict_proba(ff.validation) : std::vector<double>{};
      test_probs[mf] = model.predict_proba(ff.test);
      val_auc[mf] = auroc(val_probs[mf], y_val);
      out.artifact.val_auroc[key_of(pipeline, mf.name())] = val_auc[mf];
    }

    for (const auto& mf : config.unimodal) {
      const auto& probs = test_probs.at(mf);
      std::vector<int> preds(probs.size());
      std::transform(probs.begin(), probs.end(), preds.begin(), vote);
      record(pipeline, mf.name(), probs, preds);
    }

    for (const auto& group : config.groups) {
      for (auto rule : config.rules) {
        FusionConfig cfg{rule, group.members, config.tie};
        FusionTarget target{pipeline, group.name, rule};
        const auto name = target.model_name();
        auto test_fused = fuse_series(cfg, test_probs, plan.test.size(), val_auc);
        record(pipeline, name, test_fused.scores, test_fused.labels);
        if (rule == FusionRule::Selective) {
          auto& sel = out.artifact.selected[key_of(pipeline, name)];
          for (const auto& mf : test_fused.active) sel.push_back(mf.name());
        }

        const bool is_explain = config.explain && config.explain->pipeline == pipeline &&
                                config.explain->group == group.name && config.explain->rule == rule;
        if (is_explain && !plan.test.empty()) {
          std::vector<ModelFn> fns;
          std::vector<std::string> names;
          std::vector<Matrix> samples;
          std::vector<std::vector<double>> backgrounds;
          for (const auto& mf : test_fused.active) {
            const auto& ff = fitted.at(mf);
            const FittedModel* model = &ff.learners.at(pipeline);
            fns.emplace_back([model](std::span<const double> x) { return model->predict_proba(x); });
            names.push_back(mf.name());
            samples.push_back(ff.test);
            backgrounds.push_back(column_means(ff.train));
          }
          auto report = explain_block_mean(fns, names, samples, backgrounds, config.permutations,
                                           derive_seed(plan.seed, {plan.fold, 0x7368617070ULL}));
          out.shap_global.assign(group.members.size(), 0.0);
          for (std::size_t k = 0; k < group.members.size(); ++k) {
            auto it = std::find(names.begin(), names.end(), group.members[k].name());
            if (it != names.end()) out.shap_global[k] = report.global[static_cast<std::size_t>(it - names.begin())];
          }
          out.artifact.shap = std::move(report);
        }

        const bool is_audit = config.audit && config.audit->pipeline == pipeline &&
                              config.audit->group == group.name && config.audit->rule == rule;
        if (is_audit) {
          auto val_fused = fuse_series(cfg, val_probs, plan.validation.size(), val_auc);
          AuditData a;
          a.val_scores = val_fused.scores;
          a.val_labels = y_val;
          a.test_scores = test_fused.scores;
          a.test_labels = y_test;
          for (auto k : plan.validation) a.val_members.push_back(data.members[k]);
          for (auto k : plan.test) a.test_members.push_back(data.members[k]);
          out.audit = std::move(a);
        }
      }
    }
  }
  return out;
}

std::vector<ModalityFeature> needed_features(const EvalConfig& config) {
  std::set<ModalityFeature, CanonicalOrder> s(config.unimodal.begin(), config.unimodal.end());
  for (const auto& g : config.groups) s.insert(g.members.begin(), g.members.end());
  return {s.begin(), s.end()};
}

void validate_config(const EvalConfig& config) {
  if (config.runs == 0) throw ValidationError("runs must be at least 1");
  if (config.pipelines.empty()) throw ValidationError("no pipelines configured");
  for (const auto& g : config.groups) {
    if (g.members.empty()) throw ValidationError("fusion group " + g.name + " has no members");
  }
  auto check_target = [&](const std::optional<FusionTarget>& t, const char* what) {
    if (!t) return;
    if (std::find(config.pipelines.begin(), config.pipelines.end(), t->pipeline) == config.pipelines.end()) {
      throw ValidationError(std::string(what) + " target pipeline is not evaluated");
    }
    if (std::find(config.rules.begin(), config.rules.end(), t->rule) == config.rules.end()) {
      throw ValidationError(std::string(what) + " target rule is not evaluated");
    }
    (void)find_group(config.groups, t->group);
  };
  check_target(config.explain, "explain");
  check_target(config.audit, "audit");
  if (config.explain && config.permutations == 0) throw ValidationError("permutations must be at least 1");
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void add_quantity(FairnessSummary& fs, const std::string& attribute, const std::string& phase,
                  const std::string& quantity, const std::string& group, std::vector<double> values,
                  std::size_t na_runs) {
  FairnessQuantity q;
  q.attribute = attribute;
  q.phase = phase;
  q.quantity = quantity;
  q.group = group;
  q.na_runs = na_runs;
  q.summary = summarize_metric(quantity, std::move(values));
  fs.quantities.push_back(std::move(q));
}

FairnessSummary summarize_fairness(const Cohort& cohort, const std::vector<UnitOutput>& units,
                                   const EvalConfig& config) {
  FairnessSummary fs;
  fs.target = *config.audit;
  fs.method = MitigationRule{}.method;
  const auto& ps = cohort.participants();

  for (auto attr : config.attributes) {
    const auto spec = cohort.config().sensitive_spec(attr);
    const std::string attr_name(to_string(attr));
    // phase -> quantity|group -> per-run values
    std::map<std::string, std::map<std::pair<std::string, std::string>, std::vector<double>>> values;
    std::map<std::string, std::map<std::pair<std::string, std::string>, std::size_t>> na;
    std::set<std::string> all_groups;

    for (std::size_t run = 0; run < config.runs; ++run) {
      std::vector<double> scores;
      std::vector<int> labels, pre, post;
      std::vector<std::string> groups;
      for (const auto& u : units) {
        if (u.artifact.run != run || !u.audit) continue;
        const auto& a = *u.audit;
        std::vector<std::string> val_groups, test_groups;
        for (auto m : a.val_members) val_groups.push_back(bin_sensitive(ps[m], spec));
        for (auto m : a.test_members) test_groups.push_back(bin_sensitive(ps[m], spec));
        std::vector<int> post_fold;
        if (config.mitigate && !a.val_scores.empty()) {
          const auto rule = fit_eo_thresholds(a.val_scores, a.val_labels, val_groups);
          post_fold = apply_thresholds(rule, a.test_scores, test_groups);
        } else {
          for (double s : a.test_scores) post_fold.push_back(label_from_score(s, config.tie));
        }
        for (std::size_t i = 0; i < a.test_scores.size(); ++i) {
          scores.push_back(a.test_scores[i]);
          labels.push_back(a.test_labels[i]);
          pre.push_back(label_from_score(a.test_scores[i], config.tie));
          post.push_back(post_fold[i]);
          groups.push_back(test_groups[i]);
        }
      }
      if (scores.empty()) continue;
      std::vector<std::pair<std::string, const std::vector<int>*>> phases = {{"pre", &pre}};
      if (config.mitigate) phases.emplace_back("post", &post);
      for (const auto& [phase, preds] : phases) {
        const auto report = fairness_report(attr_name, phase, *preds, labels, groups);
        auto put = [&](const std::string& q, const std::string& g, std::optional<double> v) {
          if (v) values[phase][{q, g}].push_back(*v);
          else ++na[phase][{q, g}];
          values[phase].try_emplace({q, g});
        };
        put("EOR", "", report.eor.value);
        put("DPR", "", report.dpr.value);
        put("MeanSubgroupF1", "", report.f1.mean);
        for (const auto& g : report.rates.groups) {
          all_groups.insert(g.group);
          put("TPR", g.group, g.tpr);
          put("FPR", g.group, g.fpr);
          put("SelectionRate", g.group, g.selection_rate);
        }
        for (const auto& [g, f1] : report.f1.per_group) put("F1", g, f1);
      }
    }
    for (auto& [phase, by_key] : values) {
      for (const char* q : {"EOR", "DPR", "MeanSubgroupF1"}) {
        auto it = by_key.find({q, ""});
        if (it != by_key.end()) add_quantity(fs, attr_name, phase, q, "", it->second, na[phase][{q, ""}]);
      }
      for (const char* q : {"TPR", "FPR", "SelectionRate", "F1"}) {
        for (const auto& g : all_groups) {
          auto it = by_key.find({q, g});
          if (it != by_key.end()) add_quantity(fs, attr_name, phase, q, g, it->second, na[phase][{q, g}]);
        }
      }
    }
  }
  return fs;
}

}  // namespace

TaskResult run_task(const Cohort& cohort, const std::string& task_name, const EvalConfig& config) {
  validate_config(config);
  const auto& spec = cohort.task(task_name);
  const auto data = task_data(cohort, spec);
  const auto positives = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
  const std::size_t negatives = data.labels.size() - positives;
  if (positives < kOuterFolds || negatives < kOuterFolds) {
    throw ValidationError("task " + task_name + " needs at least " + std::to_string(kOuterFolds) +
                          " labeled participants per class (positives " + std::to_string(positives) +
                          ", negatives " + std::to_string(negatives) + ")");
  }
  if (config.audit) {
    for (auto attr : config.attributes) {
      std::set<std::string> groups;
      for (auto m : data.members) groups.insert(bin_sensitive(cohort.participants()[m], cohort.config().sensitive_spec(attr)));
      if (groups.size() < 2) {
        throw FairnessUndefinedError(std::string(to_string(attr)) + " has a single group among " + task_name +
                                     " participants");
      }
    }
  }

  const auto features = needed_features(config);
  const SummaryCache cache(cohort, features);
  const auto plans = make_folds(data.members.size(), config.runs, config.seed_base);

  std::vector<UnitOutput> units(plans.size());
  parallel_for(plans.size(), config.threads,
               [&](std::size_t u) { units[u] = run_unit(cohort, data, plans[u], features, cache, config); });

  TaskResult result;
  result.task = task_name;
  result.participants = data.members.size();
  result.positives = positives;

  // Model order: per pipeline, unimodal features then fused models.
  std::vector<std::pair<Pipeline, std::pair<std::string, bool>>> order;
  for (auto p : config.pipelines) {
    for (const auto& mf : config.unimodal) order.push_back({p, {mf.name(), false}});
    for (const auto& g : config.groups) {
      for (auto r : config.rules) order.push_back({p, {FusionTarget{p, g.name, r}.model_name(), true}});
    }
  }
  for (const auto& [p, named] : order) {
    const auto key = key_of(p, named.first);
    std::vector<double> au, ac, f1;
    std::size_t na_folds = 0;
    for (std::size_t run = 0; run < config.runs; ++run) {
      std::vector<double> fa, fc, ff;
      for (std::size_t f = 0; f < kOuterFolds; ++f) {
        const auto& u = units[run * kOuterFolds + f];
        if (u.artifact.skipped) continue;
        const auto& m = u.metrics.at(key);
        if (m.auroc) fa.push_back(*m.auroc);
        else ++na_folds;
        fc.push_back(m.accuracy);
        ff.push_back(m.macro_f1);
      }
      if (!fa.empty()) au.push_back(mean_of(fa));
      if (!fc.empty()) {
        ac.push_back(mean_of(fc));
        f1.push_back(mean_of(ff));
      }
    }
    ModelResult mr;
    mr.pipeline = p;
    mr.model = named.first;
    mr.fused = named.second;
    mr.auroc = summarize_metric("AUROC", std::move(au), na_folds);
    mr.accuracy = summarize_metric("Accuracy", std::move(ac));
    mr.macro_f1 = summarize_metric("MacroF1", std::move(f1));
    result.models.push_back(std::move(mr));
  }

  for (auto& u : units) {
    if (u.artifact.skipped) ++result.skipped_folds;
    result.hmm_truncations += u.truncations;
    result.predictions.insert(result.predictions.end(), u.rows.begin(), u.rows.end());
  }

  if (config.explain) {
    const auto& group = find_group(config.groups, config.explain->group);
    ShapSummary s;
    s.target = *config.explain;
    s.permutations = config.permutations;
    for (const auto& mf : group.members) s.modalities.push_back(mf.name());
    const std::size_t m = group.members.size();
    for (std::size_t run = 0; run < config.runs; ++run) {
      std::vector<double> acc(m, 0.0);
      std::size_t count = 0;
      for (std::size_t f = 0; f < kOuterFolds; ++f) {
        const auto& u = units[run * kOuterFolds + f];
        if (u.shap_global.empty()) continue;
        for (std::size_t k = 0; k < m; ++k) acc[k] += u.shap_global[k];
        ++count;
      }
      if (count == 0) continue;
      for (auto& v : acc) v /= static_cast<double>(count);
      s.per_run.push_back(std::move(acc));
    }
    s.mean.assign(m, 0.0);
    s.ci_half_width.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      std::vector<double> col;
      for (const auto& r : s.per_run) col.push_back(r[k]);
      if (!col.empty()) {
        s.mean[k] = mean_of(col);
        s.ci_half_width[k] = ci_half_width(col);
      }
    }
    // Dimensions as seen by the learners on the first fitted fold.
    for (const auto& u : units) {
      if (u.artifact.shap) {
        for (const auto& mf : group.members) {
          auto it = std::find(u.artifact.shap->modalities.begin(), u.artifact.shap->modalities.end(), mf.name());
          s.dims.push_back(it == u.artifact.shap->modalities.end()
                               ? 0
                               : u.artifact.shap->block_sizes[static_cast<std::size_t>(it - u.artifact.shap->modalities.begin())]);
        }
        break;
      }
    }
    result.shap = std::move(s);
  }

  if (config.audit) result.fairness = summarize_fairness(cohort, units, config);

  for (auto& u : units) result.folds.push_back(std::move(u.artifact));
  return result;
}

FusionTarget best_fusion(const TaskResult& result) {
  const ModelResult* best = nullptr;
  for (const auto& m : result.models) {
    if (!m.fused || std::isnan(m.auroc.mean)) continue;
    if (!best || m.auroc.mean > best->auroc.mean) best = &m;
  }
  if (!best) throw RuntimeError("no fused model with a defined AUROC for task " + result.task);
  const auto colon = best->model.find(':');
  return {best->pipeline, best->model.substr(colon + 1), parse_fusion_rule(best->model.substr(0, colon))};
}

}  // namespace mmscreen
