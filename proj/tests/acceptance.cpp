// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mmscreen/attribution.hpp"
#include "mmscreen/cli.hpp"
#include "mmscreen/evaluation.hpp"
#include "mmscreen/hmm.hpp"
#include "mmscreen/io.hpp"
#include "mmscreen/learners.hpp"
#include "mmscreen/synthcohort.hpp"
#include "support.hpp"

using namespace mmscreen;

namespace {

// Pinned tolerances and budgets.
constexpr double kMetricSeconds = 10.0;
constexpr double kShapTolerance = 0.05;
constexpr double kShapExactTolerance = 1e-9;
constexpr double kShapSeconds = 120.0;
constexpr double kNormTolerance = 1e-9;
constexpr double kEmSlack = 1e-8;
constexpr double kRecoveryTolerance = 0.1;
constexpr double kHmmSeconds = 120.0;
constexpr double kGradTolerance = 1e-4;
constexpr double kFdStep = 1e-6;
constexpr double kInformativeAuroc = 0.85;
constexpr double kNoiseBand = 0.1;
constexpr double kFusionSlack = 0.02;
constexpr double kShapFirstRate = 0.95;
constexpr double kSignalSeconds = 600.0;
constexpr double kNullBand = 0.08;
constexpr double kGapBefore = 0.2;
constexpr double kGapAfter = 0.1;
constexpr double kUtilityBand = 0.1;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

bool is_audio(const std::string& name) { return name.rfind("Acoustic", 0) == 0 || name.rfind("WavLM", 0) == 0; }

// 1 ----------------------------------------------------------------------
void metric_oracles(Verdict& v) {
  const auto t0 = Clock::now();
  Rng rng(1);
  std::size_t auroc_mismatch = 0, na = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(200);
    const std::uint64_t levels = 2 + rng.below(20);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
      y[i] = static_cast<int>(rng.below(2));
    }
    const auto got = auroc(s, y), want = testing::auroc_pairs(s, y);
    if (got != want) ++auroc_mismatch;
    if (!want) ++na;
  }
  std::size_t f1_mismatch = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<int> p(n), y(n);
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(2));
      y[i] = static_cast<int>(rng.below(2));
      (p[i] ? (y[i] ? tp : fp) : (y[i] ? fn : tn)) += 1;
    }
    const double f1_pos = 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    const double f1_neg = 2 * tn + fn + fp > 0 ? 2 * tn / (2 * tn + fn + fp) : 0.0;
    const double want_f1 = (f1_pos + f1_neg) / 2, want_acc = (tp + tn) / static_cast<double>(n);
    if (std::abs(macro_f1(p, y) - want_f1) > 1e-12 || std::abs(accuracy(p, y) - want_acc) > 1e-12) ++f1_mismatch;
  }
  const double secs = seconds_since(t0);
  v.detail << "auroc mismatches " << auroc_mismatch << "/1000 (" << na << " single-class NA), F1/accuracy mismatches "
           << f1_mismatch << "/100, " << fmt(secs) << " s";
  v.require(auroc_mismatch == 0, "auroc equals pair count");
  v.require(f1_mismatch == 0, "macro-F1 and accuracy equal confusion arithmetic");
  v.require(secs < kMetricSeconds, "runtime < 10 s");
}

// 2 ----------------------------------------------------------------------
void shapley_oracle(Verdict& v) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t m = 0; m < 20; ++m) {
    Rng rng(derive_seed(2, {m}));
    const std::size_t n = 120, d = 8;
    Matrix x(n, d);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal();
      const double z = x(i, 0) * x(i, 1) + std::sin(x(i, 2)) - 0.5 * x(i, 3) + 0.3 * rng.normal();
      y[i] = z > 0.0 ? 1 : 0;
    }
    const auto model = fit_gbdt(x, y, GbdtParams{20, 0.3, 3}, m);
    const ModelFn f = [&model](std::span<const double> z) { return model.predict_proba(z); };
    std::vector<double> bg(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) bg[j] += x(i, j) / static_cast<double>(n);
    }
    const auto row = x.row(rng.below(n));
    const auto exact = testing::exact_shapley(f, row, bg);
    const auto est = shap_values(f, row, bg, 2000, derive_seed(3, {m}));
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(est[j] - exact[j]));
  }
  double additive = 0.0;
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> w(6), x(6), bg(6);
    for (std::size_t j = 0; j < 6; ++j) {
      w[j] = rng.normal();
      x[j] = rng.normal();
      bg[j] = rng.normal();
    }
    const ModelFn f = [&w](std::span<const double> z) {
      return std::inner_product(w.begin(), w.end(), z.begin(), 1.5);
    };
    const auto phi = shap_values(f, x, bg, 3, static_cast<std::uint64_t>(t));
    for (std::size_t j = 0; j < 6; ++j) additive = std::max(additive, std::abs(phi[j] - w[j] * (x[j] - bg[j])));
  }
  const double secs = seconds_since(t0);
  v.detail << "max |dphi| GBDT " << fmt(worst) << " over 20 models, additive " << fmt(additive) << ", " << fmt(secs)
           << " s";
  v.require(worst <= kShapTolerance, "sampled vs exact <= 0.05");
  v.require(additive <= kShapExactTolerance, "additive exact to 1e-9");
  v.require(secs < kShapSeconds, "runtime < 2 min");
}

// 3 ----------------------------------------------------------------------
double report_norm_error(const ShapReport& r) {
  double worst = 0.0;
  for (std::size_t i = 0; i < r.shares.rows(); ++i) {
    const auto row = r.shares.row(i);
    worst = std::max(worst, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
  }
  return std::max(worst, std::abs(std::accumulate(r.global.begin(), r.global.end(), 0.0) - 1.0));
}

void mm_shap_normalization(Verdict& v, const std::vector<ShapReport>& pipeline_reports) {
  Rng rng(5);
  double worst = 0.0;
  std::size_t reports = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t blocks = 1 + rng.below(4);
    std::vector<ModelFn> fns;
    std::vector<std::string> names;
    std::vector<Matrix> samples;
    std::vector<std::vector<double>> bgs;
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t d = 1 + rng.below(5);
      std::vector<double> w(d);
      for (auto& x : w) x = rng.normal();
      fns.emplace_back([w](std::span<const double> z) {
        return sigmoid(std::inner_product(w.begin(), w.end(), z.begin(), 0.0) + z[0] * z[z.size() - 1]);
      });
      names.push_back("m" + std::to_string(b));
      Matrix s(n, d);
      for (auto& x : s.data()) x = rng.normal();
      samples.push_back(s);
      bgs.emplace_back(d, 0.0);
    }
    const auto r = explain_block_mean(fns, names, samples, bgs, 16, static_cast<std::uint64_t>(t));
    worst = std::max(worst, report_norm_error(r));
    ++reports;
  }
  for (const auto& r : pipeline_reports) {
    worst = std::max(worst, report_norm_error(r));
    ++reports;
  }
  double dup = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 1 + rng.below(5);
    std::vector<std::size_t> sizes(m), dup_sizes;
    std::vector<double> phi, dup_phi;
    const std::size_t target = rng.below(m);
    for (std::size_t b = 0; b < m; ++b) {
      sizes[b] = 1 + rng.below(6);
      std::vector<double> block(sizes[b]);
      for (auto& x : block) x = rng.normal();
      phi.insert(phi.end(), block.begin(), block.end());
      dup_phi.insert(dup_phi.end(), block.begin(), block.end());
      if (b == target) dup_phi.insert(dup_phi.end(), block.begin(), block.end());
      dup_sizes.push_back(b == target ? 2 * sizes[b] : sizes[b]);
    }
    const auto a = mm_shap_sample(phi, sizes), c = mm_shap_sample(dup_phi, dup_sizes);
    for (std::size_t b = 0; b < m; ++b) dup = std::max(dup, std::abs(a[b] - c[b]));
  }
  v.detail << reports << " reports, max |sum - 1| " << fmt(worst) << ", duplication drift " << fmt(dup);
  v.require(worst <= kNormTolerance, "shares sum to 1 +- 1e-9");
  v.require(dup <= kNormTolerance, "channel duplication invariance 1e-9");
}

// 4 ----------------------------------------------------------------------
void hmm_checks(Verdict& v) {
  const auto t0 = Clock::now();
  Rng rng(6);
  std::size_t monotone_fail = 0;
  double worst_drop = 0.0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const std::size_t d = 1 + rng.below(8), n = 3 + rng.below(8);
    std::vector<FeatureSeries> data;
    const double scale = std::exp(rng.normal());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = 5 + rng.below(40);
      std::vector<double> vals(len * d);
      for (auto& x : vals) x = scale * (rng.normal() + (rng.uniform() < 0.3 ? 3.0 : 0.0));
      data.push_back(testing::series_of("P" + std::to_string(i), FeatureSet::Acoustic, len, d, vals));
    }
    HmmFitOptions opt;
    opt.seed = t;
    const auto m = fit_hmm(data, opt);
    bool ok = true;
    for (std::size_t k = 1; k < m.log_likelihood_trace.size(); ++k) {
      const double drop = m.log_likelihood_trace[k - 1] - m.log_likelihood_trace[k];
      worst_drop = std::max(worst_drop, drop);
      if (drop > kEmSlack) ok = false;
    }
    monotone_fail += !ok;
  }

  // Planted recovery on equal-length sequences from ten synthetic generators.
  double best = 0.0;
  for (std::uint64_t planted_seed = 1; planted_seed <= 10; ++planted_seed) {
    auto cfg = default_synth_config(60);
    cfg.seed = planted_seed;
    cfg.state_spread = 3.0;
    SynthFeatureSpec spec{FeatureSet::Acoustic, 4, 150, 150, false, 0.0};
    const auto planted = generative_hmm(cfg, spec);
    std::vector<FeatureSeries> train;
    for (std::size_t i = 0; i < cfg.n; ++i) {
      Rng r(derive_seed(cfg.seed, {i, 200}));
      FeatureSeries s;
      s.participant_id = "P" + std::to_string(i);
      s.feature_set = FeatureSet::Acoustic;
      s.data = sample_hmm(planted, spec.t_max, r);
      s.channel_names = {"a", "b", "c", "d"};
      train.push_back(std::move(s));
    }
    const auto fit = fit_hmm(train, HmmFitOptions{});
    std::vector<std::size_t> perm = {0, 1, 2, 3};
    double matched = std::numeric_limits<double>::infinity();
    do {
      double worst = 0.0;
      for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t c = 0; c < 4; ++c) {
          worst = std::max(worst, std::abs(fit.means(perm[s], c) - planted.means(s, c)));
        }
      }
      matched = std::min(matched, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    best = std::max(best, matched);
  }
  const double secs = seconds_since(t0);
  v.detail << "EM non-monotone fits " << monotone_fail << "/50 (largest drop " << fmt(worst_drop)
           << "), worst planted mean error over 10 models " << fmt(best) << ", " << fmt(secs) << " s";
  v.require(monotone_fail == 0, "EM log-likelihood non-decreasing");
  v.require(best <= kRecoveryTolerance, "planted means within 0.1");
  v.require(secs < kHmmSeconds, "runtime < 2 min");
}

// 5 ----------------------------------------------------------------------
void lr_gradient_check(Verdict& v) {
  Rng rng(7);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 5 + rng.below(80), d = 1 + rng.below(10);
    Matrix x(n, d);
    std::vector<int> y(n);
    for (auto& e : x.data()) e = rng.normal();
    for (auto& e : y) e = static_cast<int>(rng.below(2));
    std::vector<double> w(d), g(d);
    for (auto& e : w) e = rng.normal();
    const double b = rng.normal(), l2 = rng.uniform(0.0, 2.0);
    double gb = 0.0;
    lr_gradient(x, y, w, b, l2, g, gb);
    std::vector<double> fd(d + 1), an(g);
    an.push_back(gb);
    for (std::size_t j = 0; j <= d; ++j) {
      auto wp = w, wm = w;
      double bp = b, bm = b;
      if (j < d) {
        wp[j] += kFdStep;
        wm[j] -= kFdStep;
      } else {
        bp += kFdStep;
        bm -= kFdStep;
      }
      fd[j] = (lr_objective(x, y, wp, bp, l2) - lr_objective(x, y, wm, bm, l2)) / (2 * kFdStep);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j <= d; ++j) {
      num = std::max(num, std::abs(fd[j] - an[j]));
      den = std::max(den, std::abs(an[j]));
    }
    worst = std::max(worst, num / std::max(den, 1e-12));
  }
  v.detail << "max relative error " << fmt(worst) << " over 20 problems (h = 1e-6)";
  v.require(worst <= kGradTolerance, "relative error <= 1e-4");
}

// 6 ----------------------------------------------------------------------
SynthConfig signal_config() {
  auto c = default_synth_config(200);
  c.seed = 2024;
  return c;
}

std::vector<ShapReport> signal_recovery(Verdict& v) {
  const auto t0 = Clock::now();
  const auto cohort = generate(signal_config());
  EvalConfig cfg;
  cfg.pipelines = {Pipeline::LRGBDT};
  cfg.rules = {FusionRule::Selective};
  cfg.groups = {find_group(default_fusion_groups(), "A+L+D")};
  cfg.runs = 10;
  cfg.explain = FusionTarget{Pipeline::LRGBDT, "A+L+D", FusionRule::Selective};
  cfg.keep_predictions = false;
  const auto r = run_task(cohort, "MoCA", cfg);

  double weakest_audio = 1.0, best_uni = 0.0, worst_noise = 0.0;
  for (const auto& m : r.models) {
    if (m.fused) continue;
    best_uni = std::max(best_uni, m.auroc.mean);
    if (is_audio(m.model)) weakest_audio = std::min(weakest_audio, m.auroc.mean);
    else worst_noise = std::max(worst_noise, std::abs(m.auroc.mean - 0.5));
  }
  const double fused = r.model(Pipeline::LRGBDT, cfg.explain->model_name()).auroc.mean;
  std::size_t first = 0, total = 0;
  std::vector<ShapReport> reports;
  for (const auto& f : r.folds) {
    if (!f.shap) continue;
    const auto& g = f.shap->global;
    const auto top = static_cast<std::size_t>(std::max_element(g.begin(), g.end()) - g.begin());
    first += is_audio(f.shap->modalities[top]);
    ++total;
    reports.push_back(*f.shap);
  }
  const double rate = total ? static_cast<double>(first) / static_cast<double>(total) : 0.0;
  const double secs = seconds_since(t0);
  v.detail << "weakest audio AUROC " << fmt(weakest_audio) << ", max |noise - 0.5| " << fmt(worst_noise)
           << ", selective " << fmt(fused) << " vs best unimodal " << fmt(best_uni) << ", audio ranked first "
           << first << "/" << total << ", " << fmt(secs) << " s";
  v.require(weakest_audio >= kInformativeAuroc, "informative AUROC >= 0.85");
  v.require(worst_noise <= kNoiseBand, "uninformative within 0.5 +- 0.1");
  v.require(fused >= best_uni - kFusionSlack, "fusion >= best unimodal - 0.02");
  v.require(total == 50 && rate >= kShapFirstRate, "informative first in >= 95% of 50 folds");
  v.require(secs < kSignalSeconds, "runtime < 10 min");
  return reports;
}

// 7 ----------------------------------------------------------------------
void null_safety(Verdict& v) {
  const auto base = generate(signal_config());
  EvalConfig cfg;
  cfg.pipelines = {Pipeline::LRGBDT};
  cfg.groups = {find_group(default_fusion_groups(), "All"), find_group(default_fusion_groups(), "A+L+D")};
  cfg.runs = 1;
  cfg.keep_predictions = false;
  std::map<std::string, std::vector<double>> per_model;
  for (std::uint64_t run = 0; run < 20; ++run) {
    auto people = base.participants();
    std::vector<double> scores;
    for (const auto& p : people) scores.push_back(p.scores.at("MoCA"));
    Rng rng(derive_seed(77, {run}));
    rng.shuffle(std::span<double>(scores));
    for (std::size_t i = 0; i < people.size(); ++i) people[i].scores["MoCA"] = scores[i];
    Cohort permuted(people, base.series(), base.config());
    cfg.seed_base = 42 + run;
    const auto r = run_task(permuted, "MoCA", cfg);
    for (const auto& m : r.models) {
      if (m.fused) per_model[m.model].push_back(m.auroc.mean);
    }
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, vals] : per_model) {
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    if (std::abs(mean - 0.5) >= worst) {
      worst = std::abs(mean - 0.5);
      worst_name = name;
    }
  }
  v.detail << per_model.size() << " fused models x 20 permuted runs, max |mean AUROC - 0.5| " << fmt(worst) << " ("
           << worst_name << ")";
  v.require(!per_model.empty() && worst <= kNullBand, "fused AUROC within 0.5 +- 0.08");
}

// 8 ----------------------------------------------------------------------
void fairness_checks(Verdict& v) {
  Rng rng(8);
  std::size_t mismatch = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 4 + rng.below(100), k = 2 + rng.below(4);
    std::vector<int> p(n), y(n);
    std::vector<std::string> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(2));
      y[i] = static_cast<int>(rng.below(2));
      g[i] = "g" + std::to_string(i < k ? i : rng.below(k));
    }
    const auto r = group_rates(p, y, g);
    std::vector<std::optional<double>> tpr, fpr, sr;
    for (const auto& gr : r.groups) {
      tpr.push_back(gr.tpr);
      fpr.push_back(gr.fpr);
      sr.push_back(gr.selection_rate);
    }
    const auto d = dpr(r), e = eor(r);
    const bool any_sel = std::any_of(sr.begin(), sr.end(), [](auto x) { return *x > 0.0; });
    if (any_sel != d.value.has_value() || (any_sel && *d.value != *testing::min_pair_ratio(sr))) ++mismatch;
    const bool defined = std::all_of(tpr.begin(), tpr.end(), [](auto x) { return x.has_value(); }) &&
                         std::all_of(fpr.begin(), fpr.end(), [](auto x) { return x.has_value(); });
    if (defined != e.value.has_value()) ++mismatch;
    else if (defined && *e.value != std::min(*testing::min_pair_ratio(tpr), *testing::min_pair_ratio(fpr))) ++mismatch;
  }

  // Planted bias: the synthetic cohort supplies groups and labels; fused
  // scores carry a +0.3 shift for women.
  auto sc = default_synth_config(3000);
  sc.seed = 88;
  sc.features = {{FeatureSet::Demographics, 3, 1, 1, false, 0.0}};
  const auto cohort = generate(sc);
  const auto spec = cohort.config().sensitive_spec(SensitiveAttribute::Sex);
  const auto& task = cohort.task("MoCA");
  std::vector<double> vs, ts;
  std::vector<int> vy, ty;
  std::vector<std::string> vg, tg;
  Rng srng(9);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& p = cohort.participants()[i];
    const int y = *label_for(p, task) ? 1 : 0;
    const std::string g = bin_sensitive(p, spec);
    const double s = std::clamp(0.3 + 0.3 * y + 0.2 * srng.normal() + (g == "F" ? 0.3 : 0.0), 0.0, 1.0);
    const bool val = i % 3 == 0;
    (val ? vs : ts).push_back(s);
    (val ? vy : ty).push_back(y);
    (val ? vg : tg).push_back(g);
  }
  std::vector<int> pre(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) pre[i] = vote(ts[i]);
  const auto rule = fit_eo_thresholds(vs, vy, vg);
  const auto post = apply_thresholds(rule, ts, tg);
  const auto rp = group_rates(pre, ty, tg), rq = group_rates(post, ty, tg);
  const double gap_pre = std::abs(*rp.at("F").tpr - *rp.at("M").tpr);
  const double gap_post = std::abs(*rq.at("F").tpr - *rq.at("M").tpr);
  const double ba_pre = balanced_accuracy(pre, ty), ba_post = balanced_accuracy(post, ty);

  // Four-fifths: SR 0.4 vs 0.5 gives DPR exactly 0.8.
  const int fy[] = {1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  std::vector<int> preds;
  std::vector<int> labels;
  std::vector<std::string> groups;
  for (int copy = 0; copy < 2; ++copy) {
    for (int i = 0; i < 10; ++i) {
      // Group A selects 4 of 10, group B 5 of 10.
      preds.push_back(copy == 0 ? (i < 4 ? 1 : 0) : (i < 5 ? 1 : 0));
      labels.push_back(fy[i]);
      groups.push_back(copy == 0 ? "A" : "B");
    }
  }
  const double exact = *dpr(group_rates(preds, labels, groups)).value;
  const bool flip = exact == 0.8 && four_fifths_fair(exact) && !four_fifths_fair(std::nextafter(0.8, 0.0)) &&
                    four_fifths_fair(std::nextafter(0.8, 1.0));

  v.detail << "ratio mismatches " << mismatch << "/500, |dTPR| " << fmt(gap_pre) << " -> " << fmt(gap_post)
           << ", balanced accuracy " << fmt(ba_pre) << " -> " << fmt(ba_post) << ", DPR(0.4, 0.5) = " << exact;
  v.require(mismatch == 0, "EOR/DPR equal pair enumeration");
  v.require(gap_pre >= kGapBefore, "unmitigated |dTPR| >= 0.2");
  v.require(gap_post <= kGapAfter, "mitigated |dTPR| <= 0.1");
  v.require(std::abs(ba_post - ba_pre) <= kUtilityBand, "balanced accuracy within 0.1");
  v.require(flip, "four-fifths verdict flips at 0.8");
}

// 9 ----------------------------------------------------------------------
void protocol_fidelity(Verdict& v) {
  const auto plans = make_folds(39, 100, 42);
  bool sizes = true, seeds = true, partition = true;
  double train_share = 0.0, val_share = 0.0, test_share = 0.0;
  for (std::size_t run = 0; run < 100; ++run) {
    std::vector<int> hits(39, 0);
    for (std::size_t f = 0; f < kOuterFolds; ++f) {
      const auto& p = plans[run * kOuterFolds + f];
      sizes = sizes && (p.test.size() == 7 || p.test.size() == 8);
      seeds = seeds && p.seed == 42 + run;
      for (auto i : p.test) ++hits[i];
      train_share += static_cast<double>(p.train.size()) / 39.0 / 500.0;
      val_share += static_cast<double>(p.validation.size()) / 39.0 / 500.0;
      test_share += static_cast<double>(p.test.size()) / 39.0 / 500.0;
    }
    partition = partition && std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
  }

  testing::TempDir dataset("accept"), a("accept"), b("accept");
  write_cohort(generate(default_synth_config(39)), dataset.path());
  auto invoke = [&](const std::filesystem::path& out, const char* threads) {
    std::ostringstream sink;
    return run_cli({"evaluate", "--dataset", dataset.path().string(), "--out", out.string(), "--runs", "2",
                    "--task", "MoCA", "--threads", threads},
                   sink, sink);
  };
  const bool ran = invoke(a.path(), "1") == 0 && invoke(b.path(), "4") == 0;
  bool identical = ran;
  for (const char* f : {"results.csv", "predictions.csv", "manifest.json"}) {
    identical = identical && io::read_text_file(a.path() / f) == io::read_text_file(b.path() / f);
  }
  v.detail << "test folds of 7/8 " << (sizes ? "yes" : "no") << ", partition " << (partition ? "yes" : "no")
           << ", split " << fmt(100 * train_share) << "/" << fmt(100 * val_share) << "/" << fmt(100 * test_share)
           << "%, seeds 42+run " << (seeds ? "yes" : "no") << ", outputs identical at 1 vs 4 threads "
           << (identical ? "yes" : "no");
  v.require(sizes && partition, "fold sizes {7, 8} partitioning N = 39");
  v.require(seeds, "seed = 42 + run");
  v.require(identical, "byte-identical outputs across thread counts");
}

}  // namespace

int main() {
  std::vector<std::pair<int, Verdict>> results;
  auto run = [&](int id, const std::function<void(Verdict&)>& fn) {
    Verdict v;
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << v.detail.str() << std::endl;
    results.emplace_back(id, std::move(v));
  };
  std::vector<ShapReport> reports;
  run(1, metric_oracles);
  run(2, shapley_oracle);
  run(6, [&](Verdict& v) { reports = signal_recovery(v); });
  run(3, [&](Verdict& v) { mm_shap_normalization(v, reports); });
  run(4, hmm_checks);
  run(5, lr_gradient_check);
  run(7, null_safety);
  run(8, fairness_checks);
  run(9, protocol_fidelity);
  const bool all = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.second.pass; });
  return all ? 0 : 1;
}
