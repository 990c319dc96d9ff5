#include "mmscreen/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmscreen/error.hpp"
#include "mmscreen/io.hpp"

namespace mmscreen {

namespace {

constexpr double kEps = 1e-12;
constexpr double kMaxCombinations = 1e7;

void check_lengths(std::size_t a, std::size_t b, std::size_t c, const char* who) {
  if (a != b || a != c) throw RuntimeError(std::string(who) + ": inputs differ in length");
}

std::map<std::string, std::vector<std::size_t>> members_by_group(std::span<const std::string> groups) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < groups.size(); ++i) out[groups[i]].push_back(i);
  return out;
}

RatioResult min_max_ratio(const std::vector<double>& values, bool& zero_over_zero) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*hi == 0.0) {
    zero_over_zero = true;
    return {1.0, "", true};
  }
  return {*lo / *hi, "", false};
}

struct Candidate {
  double threshold;
  double tpr;
  double fpr;
  double ba;
};

std::vector<Candidate> candidates_for(std::span<const double> scores, std::span<const int> labels,
                                      const std::vector<std::size_t>& idx) {
  std::vector<double> pos, neg, grid = {0.0, 1.0};
  for (auto i : idx) {
    (labels[i] == 1 ? pos : neg).push_back(scores[i]);
    grid.push_back(scores[i]);
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<Candidate> out;
  out.reserve(grid.size());
  for (double t : grid) {
    const auto tp = static_cast<double>(pos.end() - std::lower_bound(pos.begin(), pos.end(), t));
    const auto fp = static_cast<double>(neg.end() - std::lower_bound(neg.begin(), neg.end(), t));
    const double tpr = tp / static_cast<double>(pos.size());
    const double fpr = fp / static_cast<double>(neg.size());
    out.push_back({t, tpr, fpr, 0.5 * (tpr + 1.0 - fpr)});
  }
  return out;
}

// Keeps `keep` evenly spaced candidates including both ends.
std::vector<Candidate> thin(const std::vector<Candidate>& c, std::size_t keep) {
  if (c.size() <= keep || keep < 2) return c;
  std::vector<Candidate> out;
  for (std::size_t k = 0; k < keep; ++k) {
    out.push_back(c[(k * (c.size() - 1)) / (keep - 1)]);
  }
  return out;
}

}  // namespace

const GroupRate& GroupRates::at(std::string_view group) const {
  for (const auto& g : groups) {
    if (g.group == group) return g;
  }
  throw RuntimeError("no group '" + std::string(group) + "'");
}

GroupRates group_rates(std::span<const int> preds, std::span<const int> labels, std::span<const std::string> groups) {
  check_lengths(preds.size(), labels.size(), groups.size(), "group_rates");
  const auto by_group = members_by_group(groups);
  if (by_group.size() < 2) {
    throw FairnessUndefinedError("need at least two non-empty groups, found " + std::to_string(by_group.size()));
  }
  GroupRates out;
  for (const auto& [name, idx] : by_group) {
    GroupRate r;
    r.group = name;
    r.n = idx.size();
    std::size_t tp = 0, fp = 0, selected = 0;
    for (auto i : idx) {
      if (labels[i] == 1) {
        ++r.n_pos;
        tp += preds[i] == 1;
      } else {
        ++r.n_neg;
        fp += preds[i] == 1;
      }
      selected += preds[i] == 1;
    }
    if (r.n_pos > 0) r.tpr = static_cast<double>(tp) / static_cast<double>(r.n_pos);
    if (r.n_neg > 0) r.fpr = static_cast<double>(fp) / static_cast<double>(r.n_neg);
    r.selection_rate = static_cast<double>(selected) / static_cast<double>(r.n);
    out.groups.push_back(std::move(r));
  }
  return out;
}

GroupRates group_rates(std::span<const double> scores, std::span<const int> labels,
                       std::span<const std::string> groups, double threshold) {
  std::vector<int> preds(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= threshold ? 1 : 0;
  return group_rates(preds, labels, groups);
}

RatioResult dpr(const GroupRates& rates) {
  std::vector<double> sr;
  for (const auto& g : rates.groups) {
    if (!g.selection_rate) return {std::nullopt, "selection rate undefined for group " + g.group};
    sr.push_back(*g.selection_rate);
  }
  if (sr.empty()) return {std::nullopt, "no groups"};
  if (*std::max_element(sr.begin(), sr.end()) == 0.0) return {std::nullopt, "no group has any positive prediction"};
  const auto [lo, hi] = std::minmax_element(sr.begin(), sr.end());
  return {*lo / *hi, "", false};
}

RatioResult eor(const GroupRates& rates) {
  std::vector<double> tpr, fpr;
  for (const auto& g : rates.groups) {
    if (!g.tpr) return {std::nullopt, "TPR undefined for group " + g.group + " (no positives)"};
    if (!g.fpr) return {std::nullopt, "FPR undefined for group " + g.group + " (no negatives)"};
    tpr.push_back(*g.tpr);
    fpr.push_back(*g.fpr);
  }
  if (tpr.empty()) return {std::nullopt, "no groups"};
  bool zz = false;
  const auto t = min_max_ratio(tpr, zz);
  const auto f = min_max_ratio(fpr, zz);
  return {std::min(*t.value, *f.value), "", zz};
}

double MitigationRule::threshold_for(const std::string& group) const {
  auto it = thresholds.find(group);
  return it == thresholds.end() ? global_threshold : it->second;
}

double balanced_accuracy(std::span<const int> preds, std::span<const int> labels) {
  std::size_t tp = 0, tn = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 1) {
      ++pos;
      tp += preds[i] == 1;
    } else {
      ++neg;
      tn += preds[i] == 0;
    }
  }
  const double tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  const double tnr = neg ? static_cast<double>(tn) / static_cast<double>(neg) : 0.0;
  if (!pos) return tnr;
  if (!neg) return tpr;
  return 0.5 * (tpr + tnr);
}

double balanced_accuracy_threshold(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw RuntimeError("balanced_accuracy_threshold: no scores");
  std::vector<double> grid(scores.begin(), scores.end());
  grid.push_back(0.0);
  grid.push_back(1.0);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double best_t = grid.front();
  double best = -1.0;
  std::vector<int> preds(scores.size());
  for (double t : grid) {
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= t ? 1 : 0;
    const double ba = balanced_accuracy(preds, labels);
    if (ba > best + kEps) {
      best = ba;
      best_t = t;
    }
  }
  return best_t;
}

MitigationRule fit_eo_thresholds(std::span<const double> scores, std::span<const int> labels,
                                 std::span<const std::string> groups, double tolerance) {
  check_lengths(scores.size(), labels.size(), groups.size(), "fit_eo_thresholds");
  if (scores.empty()) throw RuntimeError("fit_eo_thresholds: empty validation set");
  if (!(tolerance >= 0.0)) throw ValidationError("fit_eo_thresholds: tolerance must be >= 0");
  MitigationRule rule;
  rule.disparity_tolerance = tolerance;
  rule.method = "deterministic per-group threshold grid search (equalized odds, disparity tolerance " +
                io::format_double(tolerance) + ")";
  rule.global_threshold = balanced_accuracy_threshold(scores, labels);

  const auto by_group = members_by_group(groups);
  std::vector<std::string> names;
  std::vector<std::vector<Candidate>> cands;
  for (const auto& [name, idx] : by_group) {
    const bool has_pos = std::any_of(idx.begin(), idx.end(), [&](std::size_t i) { return labels[i] == 1; });
    const bool has_neg = std::any_of(idx.begin(), idx.end(), [&](std::size_t i) { return labels[i] != 1; });
    if (!has_pos || !has_neg) {
      rule.fallback_groups.push_back(name);
      rule.thresholds[name] = rule.global_threshold;
      continue;
    }
    names.push_back(name);
    cands.push_back(candidates_for(scores, labels, idx));
  }
  const std::size_t g = names.size();
  if (g == 0) return rule;

  double combos = 1.0;
  for (const auto& c : cands) combos *= static_cast<double>(c.size());
  if (combos > kMaxCombinations) {
    const auto keep = static_cast<std::size_t>(std::floor(std::pow(kMaxCombinations, 1.0 / static_cast<double>(g))));
    for (auto& c : cands) c = thin(c, std::max<std::size_t>(keep, 2));
  }

  // Odometer over candidate indices; the last group varies fastest, so the
  // first optimum met is the lexicographically lowest threshold vector.
  auto odometer = [&](auto&& visit) {
    std::vector<std::size_t> pos(g, 0);
    while (true) {
      double d = 0.0, ba = 0.0;
      for (std::size_t a = 0; a < g; ++a) {
        const auto& ca = cands[a][pos[a]];
        ba += ca.ba;
        for (std::size_t b = a + 1; b < g; ++b) {
          const auto& cb = cands[b][pos[b]];
          d = std::max(d, std::abs(ca.tpr - cb.tpr) + std::abs(ca.fpr - cb.fpr));
        }
      }
      visit(pos, d, ba / static_cast<double>(g));
      std::size_t k = g;
      while (k > 0 && ++pos[k - 1] == cands[k - 1].size()) {
        pos[k - 1] = 0;
        --k;
      }
      if (k == 0) break;
    }
  };
  double min_d = std::numeric_limits<double>::infinity();
  odometer([&](const std::vector<std::size_t>&, double d, double) { min_d = std::min(min_d, d); });
  const double limit = min_d + tolerance + kEps;
  std::vector<std::size_t> best_pos(g, 0);
  double best_d = 0.0, best_ba = -1.0;
  odometer([&](const std::vector<std::size_t>& pos, double d, double ba) {
    if (d <= limit && ba > best_ba + kEps) {
      best_d = d;
      best_ba = ba;
      best_pos = pos;
    }
  });
  for (std::size_t a = 0; a < g; ++a) rule.thresholds[names[a]] = cands[a][best_pos[a]].threshold;
  rule.disparity = best_d;
  rule.mean_balanced_accuracy = best_ba;
  return rule;
}

std::vector<int> apply_thresholds(const MitigationRule& rule, std::span<const double> scores,
                                  std::span<const std::string> groups) {
  if (scores.size() != groups.size()) throw RuntimeError("apply_thresholds: inputs differ in length");
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= rule.threshold_for(groups[i]) ? 1 : 0;
  return out;
}

double binary_f1(std::span<const int> preds, std::span<const int> labels, bool* undefined) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && labels[i] == 1) ++tp;
    else if (preds[i] == 1) ++fp;
    else if (labels[i] == 1) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  if (undefined) *undefined = denom == 0;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

SubgroupF1 subgroup_f1(std::span<const int> preds, std::span<const int> labels, std::span<const std::string> groups) {
  check_lengths(preds.size(), labels.size(), groups.size(), "subgroup_f1");
  SubgroupF1 out;
  for (const auto& [name, idx] : members_by_group(groups)) {
    std::vector<int> p, l;
    for (auto i : idx) {
      p.push_back(preds[i]);
      l.push_back(labels[i]);
    }
    bool undefined = false;
    const double f1 = binary_f1(p, l, &undefined);
    if (undefined) out.undefined_groups.push_back(name);
    out.per_group.emplace_back(name, f1);
    out.mean += f1;
  }
  if (!out.per_group.empty()) out.mean /= static_cast<double>(out.per_group.size());
  return out;
}

PrePostF1 pre_post_f1(std::span<const int> preds_pre, std::span<const int> preds_post, std::span<const int> labels,
                      std::span<const std::string> groups) {
  if (preds_pre.size() != preds_post.size()) throw RuntimeError("pre_post_f1: phases differ in sample count");
  return {subgroup_f1(preds_pre, labels, groups), subgroup_f1(preds_post, labels, groups)};
}

FairnessReport fairness_report(std::string attribute, std::string phase, std::span<const int> preds,
                               std::span<const int> labels, std::span<const std::string> groups) {
  FairnessReport r;
  r.attribute = std::move(attribute);
  r.phase = std::move(phase);
  r.rates = group_rates(preds, labels, groups);
  r.eor = eor(r.rates);
  r.dpr = dpr(r.rates);
  r.f1 = subgroup_f1(preds, labels, groups);
  return r;
}

}  // namespace mmscreen
