#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmscreen/matrix.hpp"

namespace mmscreen {

enum class FeatureSet { EmotionAUs, DINOv2, rPPG, Acoustic, WavLM, RoBERTaSentiment, LLaMA, Demographics };

inline constexpr std::array<FeatureSet, 8> kAllFeatureSets = {
    FeatureSet::EmotionAUs, FeatureSet::DINOv2, FeatureSet::rPPG,  FeatureSet::Acoustic,
    FeatureSet::WavLM,      FeatureSet::RoBERTaSentiment, FeatureSet::LLaMA, FeatureSet::Demographics};

std::string_view to_string(FeatureSet fs);
// Throws ValidationError listing the valid names.
FeatureSet parse_feature_set(std::string_view name);
// LLaMA and Demographics are single-row (non-temporal) sets.
bool is_temporal(FeatureSet fs);

enum class Sex { F, M };
enum class Diagnosis { NC, MCI };

std::string_view to_string(Sex s);
std::string_view to_string(Diagnosis d);

struct ParticipantRecord {
  std::string id;
  double age = 0.0;
  Sex sex = Sex::F;
  int years_education = 0;
  Diagnosis diagnosis = Diagnosis::NC;
  std::map<std::string, double> scores;  // absent key = missing score

  friend bool operator==(const ParticipantRecord&, const ParticipantRecord&) = default;
};

struct FeatureSeries {
  std::string participant_id;
  FeatureSet feature_set = FeatureSet::EmotionAUs;
  Matrix data;  // T x D
  std::vector<std::string> channel_names;
  std::optional<double> sample_rate_hint;

  [[nodiscard]] std::size_t length() const noexcept { return data.rows(); }
  [[nodiscard]] std::size_t channels() const noexcept { return data.cols(); }

  friend bool operator==(const FeatureSeries&, const FeatureSeries&) = default;
};

enum class CompareOp { LE, LT, EqHalf };

std::string_view to_string(CompareOp op);
CompareOp parse_compare_op(std::string_view text);

struct TaskSpec {
  std::string name;  // outcome column in participants.csv
  double cutoff = 0.0;
  CompareOp op = CompareOp::LE;
  std::string positive_means;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

enum class SensitiveAttribute { Sex, AgeGroup, YoeGroup, Diagnosis };

std::string_view to_string(SensitiveAttribute a);
SensitiveAttribute parse_sensitive_attribute(std::string_view text);

struct SensitiveAttributeSpec {
  SensitiveAttribute attribute = SensitiveAttribute::Sex;
  double age_threshold = 78.9;     // age <= threshold is the lower group
  int yoe_below_college_max = 15;  // <= this: "Below college"
  int yoe_graduate_min = 17;       // >= this: "Graduate+"; in between: "College graduate"

  friend bool operator==(const SensitiveAttributeSpec&, const SensitiveAttributeSpec&) = default;
};

// Dataset-level configuration stored next to participants.csv.
struct CohortConfig {
  std::vector<TaskSpec> tasks;
  double age_threshold = 78.9;
  int yoe_below_college_max = 15;
  int yoe_graduate_min = 17;
  std::map<FeatureSet, double> sample_rates;

  [[nodiscard]] SensitiveAttributeSpec sensitive_spec(SensitiveAttribute a) const {
    return {a, age_threshold, yoe_below_college_max, yoe_graduate_min};
  }

  friend bool operator==(const CohortConfig&, const CohortConfig&) = default;
};

// Immutable validated cohort. Construction checks every invariant and
// throws ValidationError on the first violation.
class Cohort {
 public:
  Cohort() = default;
  Cohort(std::vector<ParticipantRecord> participants, std::vector<FeatureSeries> series, CohortConfig config);

  [[nodiscard]] const std::vector<ParticipantRecord>& participants() const noexcept { return participants_; }
  [[nodiscard]] const std::vector<FeatureSeries>& series() const noexcept { return series_; }
  [[nodiscard]] const CohortConfig& config() const noexcept { return config_; }
  [[nodiscard]] const std::vector<TaskSpec>& tasks() const noexcept { return config_.tasks; }
  [[nodiscard]] std::size_t size() const noexcept { return participants_.size(); }

  [[nodiscard]] const TaskSpec& task(std::string_view name) const;
  [[nodiscard]] std::optional<std::size_t> participant_index(std::string_view id) const;
  [[nodiscard]] const FeatureSeries* find_series(std::string_view participant_id, FeatureSet fs) const;
  // Feature sets with at least one series, in canonical order.
  [[nodiscard]] std::vector<FeatureSet> feature_sets() const;
  // Channel count of a feature set, or nullopt when absent.
  [[nodiscard]] std::optional<std::size_t> channels(FeatureSet fs) const;
  // Outcome columns in participants.csv order.
  [[nodiscard]] const std::vector<std::string>& outcome_names() const noexcept { return outcomes_; }

  friend bool operator==(const Cohort& a, const Cohort& b) {
    return a.participants_ == b.participants_ && a.series_ == b.series_ && a.config_ == b.config_ &&
           a.outcomes_ == b.outcomes_;
  }

  // Used by the loader to preserve the column order of participants.csv.
  void set_outcome_order(std::vector<std::string> names);

 private:
  std::vector<ParticipantRecord> participants_;
  std::vector<FeatureSeries> series_;
  CohortConfig config_;
  std::vector<std::string> outcomes_;
  std::map<std::string, std::size_t, std::less<>> participant_index_;
  std::map<std::pair<std::string, FeatureSet>, std::size_t> series_index_;
};

// On-disk layout:
//   participants.csv                      id,age,sex,years_education,diagnosis,<outcome>...
//   features/<participant_id>/<set>.csv   header of channel names, one row per time step
//   tasks.json                            task definitions and sensitive-attribute thresholds
Cohort load_cohort(const std::filesystem::path& root);
void write_cohort(const Cohort& cohort, const std::filesystem::path& root);

CohortConfig parse_cohort_config(std::string_view json_text);
std::string cohort_config_to_json(const CohortConfig& config);

// positive / negative; nullopt when the participant has no score for the task.
bool dichotomize(double score, const TaskSpec& spec);
std::optional<bool> label_for(const ParticipantRecord& record, const TaskSpec& spec);

// Median of the present scores for an outcome. Computed over the whole
// cohort, as the cutoffs are dataset-level configuration.
double median_score(const Cohort& cohort, std::string_view outcome);

// Default task menu: CDR (=0.5), MoCA (<=24), LSNS (<=12), and the four
// median-split scales (< median).
std::vector<TaskSpec> default_tasks();

std::string bin_sensitive(const ParticipantRecord& record, const SensitiveAttributeSpec& spec);

// One-hot sex / age (unique training values) / years of education (unique
// training values), each column z-scored with training statistics.
class DemographicEncoder {
 public:
  DemographicEncoder() = default;
  explicit DemographicEncoder(std::span<const ParticipantRecord* const> train);

  [[nodiscard]] std::vector<double> encode(const ParticipantRecord& record) const;
  [[nodiscard]] std::size_t dimension() const noexcept { return mean_.size(); }
  [[nodiscard]] const std::vector<Sex>& sex_levels() const noexcept { return sexes_; }
  [[nodiscard]] const std::vector<double>& age_levels() const noexcept { return ages_; }
  [[nodiscard]] const std::vector<int>& yoe_levels() const noexcept { return yoes_; }

 private:
  [[nodiscard]] std::vector<double> one_hot(const ParticipantRecord& record) const;

  std::vector<Sex> sexes_;
  std::vector<double> ages_;
  std::vector<int> yoes_;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

std::vector<double> encode_demographics(std::span<const ParticipantRecord> train_records,
                                        const ParticipantRecord& record);

}  // namespace mmscreen
