#include <doctest.h>

#include "mmscreen/error.hpp"
#include "mmscreen/fairness.hpp"
#include "support.hpp"

using namespace mmscreen;

namespace {

GroupRates rates_from(std::vector<std::optional<double>> tpr, std::vector<std::optional<double>> fpr,
                      std::vector<std::optional<double>> sr) {
  GroupRates r;
  for (std::size_t i = 0; i < sr.size(); ++i) {
    GroupRate g;
    g.group = std::string(1, static_cast<char>('A' + i));
    g.tpr = tpr.empty() ? std::optional<double>(1.0) : tpr[i];
    g.fpr = fpr.empty() ? std::optional<double>(1.0) : fpr[i];
    g.selection_rate = sr[i];
    r.groups.push_back(g);
  }
  return r;
}

}  // namespace

TEST_CASE("group confusion rates") {
  const int preds[] = {1, 1, 0, 1, 0};
  const int labels[] = {1, 0, 0, 0, 0};
  const std::string groups[] = {"A", "A", "A", "B", "B"};
  const auto r = group_rates(preds, labels, groups);
  const auto& a = r.at("A");
  CHECK(a.tpr == std::optional<double>(1.0));
  CHECK(a.fpr == std::optional<double>(0.5));
  CHECK(*a.selection_rate == doctest::Approx(2.0 / 3.0));
  CHECK_FALSE(r.at("B").tpr.has_value());
}

TEST_CASE("identical groups give identical rates") {
  const int preds[] = {1, 0, 1, 0};
  const int labels[] = {1, 0, 1, 0};
  const std::string groups[] = {"A", "A", "B", "B"};
  const auto r = group_rates(preds, labels, groups);
  auto a = r.at("A"), b = r.at("B");
  b.group = a.group;
  CHECK(a == b);
}

TEST_CASE("fewer than two groups is undefined") {
  const int preds[] = {1, 0};
  const int labels[] = {1, 0};
  const std::string groups[] = {"A", "A"};
  CHECK_THROWS_WITH_AS(group_rates(preds, labels, groups), doctest::Contains("fairness undefined"),
                       FairnessUndefinedError);
}

TEST_CASE("demographic parity ratio") {
  CHECK(*dpr(rates_from({}, {}, {0.4, 0.5})).value == doctest::Approx(0.8));
  CHECK(*dpr(rates_from({}, {}, {0.5, 0.5})).value == 1.0);
  CHECK(*dpr(rates_from({}, {}, {0.0, 0.3})).value == 0.0);
  CHECK_FALSE(dpr(rates_from({}, {}, {0.0, 0.0})).value.has_value());
}

TEST_CASE("equalized odds ratio") {
  CHECK(*eor(rates_from({0.8, 0.4}, {0.2, 0.1}, {0.5, 0.5})).value == doctest::Approx(0.5));
  CHECK(*eor(rates_from({0.7, 0.7}, {0.2, 0.2}, {0.5, 0.5})).value == 1.0);
  CHECK(*eor(rates_from({0.6, 0.6}, {0.3, 0.1}, {0.5, 0.5})).value == doctest::Approx(1.0 / 3.0));
  const auto zz = eor(rates_from({0.5, 0.5}, {0.0, 0.0}, {0.5, 0.5}));
  CHECK(*zz.value == 1.0);
  CHECK(zz.zero_over_zero);
}

TEST_CASE("ratios match pair enumeration on random groups") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 10 + rng.below(60), k = 2 + rng.below(4);
    std::vector<int> preds(n), labels(n);
    std::vector<std::string> groups(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.below(2));
      labels[i] = static_cast<int>(rng.below(2));
      groups[i] = "g" + std::to_string(i < k ? i : rng.below(k));
    }
    const auto r = group_rates(preds, labels, groups);
    std::vector<std::optional<double>> tpr, fpr, sr;
    for (const auto& g : r.groups) {
      tpr.push_back(g.tpr);
      fpr.push_back(g.fpr);
      sr.push_back(g.selection_rate);
    }
    const auto d = dpr(r);
    const bool any_sel = std::any_of(sr.begin(), sr.end(), [](auto v) { return *v > 0.0; });
    if (any_sel) CHECK(*d.value == *testing::min_pair_ratio(sr));
    const bool defined = std::all_of(tpr.begin(), tpr.end(), [](auto v) { return v.has_value(); }) &&
                         std::all_of(fpr.begin(), fpr.end(), [](auto v) { return v.has_value(); });
    const auto e = eor(r);
    CHECK(e.value.has_value() == defined);
    if (defined) CHECK(*e.value == std::min(*testing::min_pair_ratio(tpr), *testing::min_pair_ratio(fpr)));
  }
}

TEST_CASE("four-fifths verdict flips at 0.8") {
  CHECK(four_fifths_fair(0.8));
  CHECK_FALSE(four_fifths_fair(std::nextafter(0.8, 0.0)));
  CHECK(four_fifths_fair(1.0));
}

TEST_CASE("single group reduces to the balanced-accuracy threshold") {
  const double s[] = {0.1, 0.4, 0.35, 0.8, 0.6, 0.2};
  const int y[] = {0, 0, 1, 1, 1, 0};
  const std::string g[] = {"A", "A", "A", "A", "A", "A"};
  const auto rule = fit_eo_thresholds(s, y, g);
  CHECK(rule.threshold_for("A") == balanced_accuracy_threshold(s, y));
  CHECK(rule.threshold_for("unseen") == rule.global_threshold);
}

TEST_CASE("group without both classes falls back to the global threshold") {
  const double s[] = {0.1, 0.9, 0.3, 0.7, 0.8};
  const int y[] = {0, 1, 0, 1, 1};
  const std::string g[] = {"A", "A", "A", "A", "B"};
  const auto rule = fit_eo_thresholds(s, y, g);
  CHECK(rule.fallback_groups == std::vector<std::string>{"B"});
  CHECK(rule.threshold_for("B") == rule.global_threshold);
}

TEST_CASE("mitigation closes a planted score shift") {
  Rng rng(3);
  auto draw = [&](std::size_t n, std::vector<double>& s, std::vector<int>& y, std::vector<std::string>& g) {
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(rng.below(2));
      const bool a = i % 2 == 0;
      s.push_back(std::clamp((label ? 0.6 : 0.3) + 0.2 * rng.normal() + (a ? 0.3 : 0.0), 0.0, 1.0));
      y.push_back(label);
      g.push_back(a ? "A" : "B");
    }
  };
  std::vector<double> vs, ts;
  std::vector<int> vy, ty;
  std::vector<std::string> vg, tg;
  draw(400, vs, vy, vg);
  draw(2000, ts, ty, tg);
  const auto rule = fit_eo_thresholds(vs, vy, vg);
  const auto post = apply_thresholds(rule, ts, tg);
  std::vector<int> pre(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) pre[i] = ts[i] >= 0.5;
  const auto rp = group_rates(pre, ty, tg), rq = group_rates(post, ty, tg);
  CHECK(std::abs(*rp.at("A").tpr - *rp.at("B").tpr) >= 0.2);
  CHECK(std::abs(*rq.at("A").tpr - *rq.at("B").tpr) <= 0.1);
  CHECK(std::abs(balanced_accuracy(post, ty) - balanced_accuracy(pre, ty)) <= 0.1);
}

TEST_CASE("already-fair scores keep similar thresholds and utility") {
  Rng rng(4);
  std::vector<double> s;
  std::vector<int> y;
  std::vector<std::string> g;
  for (std::size_t i = 0; i < 1000; ++i) {
    const int label = static_cast<int>(rng.below(2));
    s.push_back(std::clamp((label ? 0.65 : 0.35) + 0.15 * rng.normal(), 0.0, 1.0));
    y.push_back(label);
    g.push_back(i % 2 ? "A" : "B");
  }
  const auto rule = fit_eo_thresholds(s, y, g);
  CHECK(std::abs(rule.threshold_for("A") - rule.threshold_for("B")) <= 0.1);
  const double t = balanced_accuracy_threshold(s, y);
  std::vector<int> plain(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) plain[i] = s[i] >= t;
  CHECK(std::abs(balanced_accuracy(apply_thresholds(rule, s, g), y) - balanced_accuracy(plain, y)) <= 0.02);
}

TEST_CASE("zero tolerance collapses to a trivial rule") {
  const double s[] = {0.1, 0.7, 0.4, 0.9, 0.2, 0.8, 0.55, 0.95};
  const int y[] = {0, 1, 0, 1, 0, 1, 0, 1};
  const std::string g[] = {"A", "A", "A", "A", "B", "B", "B", "B"};
  const auto rule = fit_eo_thresholds(s, y, g, 0.0);
  CHECK(rule.disparity == 0.0);
  CHECK(fit_eo_thresholds(s, y, g, 0.0).thresholds == rule.thresholds);
}

TEST_CASE("subgroup F1 before and after") {
  const int pre[] = {1, 0, 1, 1};
  const int labels[] = {1, 0, 1, 0};
  const std::string groups[] = {"A", "A", "B", "B"};
  const auto same = pre_post_f1(pre, pre, labels, groups);
  CHECK(same.delta() == 0.0);
  const int none[] = {0, 0, 0, 0};
  const auto collapsed = pre_post_f1(pre, none, labels, groups);
  CHECK(collapsed.post.mean == 0.0);
  // A: tp 1, fp 0, fn 0 -> 1; B: tp 1, fp 1, fn 0 -> 2/3
  CHECK(collapsed.pre.mean == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
}
