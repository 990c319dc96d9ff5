#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmscreen {

struct GroupRate {
  std::string group;
  std::size_t n = 0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::optional<double> tpr;  // NA without positives
  std::optional<double> fpr;  // NA without negatives
  std::optional<double> selection_rate;

  friend bool operator==(const GroupRate&, const GroupRate&) = default;
};

// Groups sorted by name.
struct GroupRates {
  std::vector<GroupRate> groups;

  [[nodiscard]] const GroupRate& at(std::string_view group) const;
};

// Throws FairnessUndefinedError with fewer than two non-empty groups.
GroupRates group_rates(std::span<const int> preds, std::span<const int> labels, std::span<const std::string> groups);
GroupRates group_rates(std::span<const double> scores, std::span<const int> labels,
                       std::span<const std::string> groups, double threshold);

struct RatioResult {
  std::optional<double> value;
  std::string reason;        // set when value is NA
  bool zero_over_zero = false;  // a 0/0 ratio was read as no disparity
};

// min SR / max SR.
RatioResult dpr(const GroupRates& rates);
// min(min TPR / max TPR, min FPR / max FPR).
RatioResult eor(const GroupRates& rates);

inline constexpr double kFourFifths = 0.8;
inline bool four_fifths_fair(double metric) { return metric >= kFourFifths; }

struct MitigationRule {
  std::map<std::string, double> thresholds;  // per group seen in validation
  double global_threshold = 0.5;             // unseen groups and single-class groups
  std::vector<std::string> fallback_groups;  // groups given the global threshold
  double disparity = 0.0;                    // max pairwise |dTPR| + |dFPR| on validation
  double mean_balanced_accuracy = 0.0;
  double disparity_tolerance = 0.05;         // candidates within this of the minimum count as ties
  std::string method = "deterministic per-group threshold grid search (equalized odds, disparity tolerance 0.05)";

  [[nodiscard]] double threshold_for(const std::string& group) const;
};

// Grid search over per-group thresholds drawn from the observed validation
// scores plus 0 and 1; a score at or above its threshold is positive.
// Among threshold vectors whose disparity is within `tolerance` of the
// minimum, maximizes mean balanced accuracy, then prefers the lowest
// thresholds. A zero tolerance selects the trivial all-positive or
// all-negative rule whenever no exact non-trivial alignment exists.
MitigationRule fit_eo_thresholds(std::span<const double> scores, std::span<const int> labels,
                                 std::span<const std::string> groups, double tolerance = 0.05);

std::vector<int> apply_thresholds(const MitigationRule& rule, std::span<const double> scores,
                                  std::span<const std::string> groups);

// Threshold maximizing balanced accuracy (lowest on ties).
double balanced_accuracy_threshold(std::span<const double> scores, std::span<const int> labels);

double balanced_accuracy(std::span<const int> preds, std::span<const int> labels);

// Positive-class F1 with 0/0 read as 0.
double binary_f1(std::span<const int> preds, std::span<const int> labels, bool* undefined = nullptr);

struct SubgroupF1 {
  std::vector<std::pair<std::string, double>> per_group;
  std::vector<std::string> undefined_groups;
  double mean = 0.0;
};

struct PrePostF1 {
  SubgroupF1 pre;
  SubgroupF1 post;
  [[nodiscard]] double delta() const { return post.mean - pre.mean; }
};

SubgroupF1 subgroup_f1(std::span<const int> preds, std::span<const int> labels, std::span<const std::string> groups);
PrePostF1 pre_post_f1(std::span<const int> preds_pre, std::span<const int> preds_post, std::span<const int> labels,
                      std::span<const std::string> groups);

struct FairnessReport {
  std::string attribute;
  std::string phase;  // "pre" or "post"
  GroupRates rates;
  RatioResult eor;
  RatioResult dpr;
  SubgroupF1 f1;
};

FairnessReport fairness_report(std::string attribute, std::string phase, std::span<const int> preds,
                               std::span<const int> labels, std::span<const std::string> groups);

}  // namespace mmscreen
