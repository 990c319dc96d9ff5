#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmscreen/attribution.hpp"
#include "mmscreen/cohort.hpp"
#include "mmscreen/fairness.hpp"
#include "mmscreen/fusion.hpp"
#include "mmscreen/hmm.hpp"
#include "mmscreen/learners.hpp"

namespace mmscreen {

inline constexpr std::size_t kOuterFolds = 5;

// One (run, fold) split. Index vectors point into the id list given to
// make_folds.
struct FoldPlan {
  std::size_t run = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;  // seed_base + run
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

// Per run: shuffle with seed_base + run, cut five contiguous test chunks
// (the first n % 5 one longer), and split the remainder into train and a
// validation tail of round(remainder / 5) ids.
std::vector<FoldPlan> make_folds(std::size_t n_ids, std::size_t runs, std::uint64_t seed_base = 42);

// Mann-Whitney statistic with half credit for ties; nullopt (NA) when a
// class is absent.
std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels);
double accuracy(std::span<const int> preds, std::span<const int> labels);
// Unweighted mean of both classes' F1; a 0/0 F1 counts as 0.
double macro_f1(std::span<const int> preds, std::span<const int> labels);

// Normal-approximation half-width 1.96 * sd / sqrt(runs), sd with n - 1.
double ci_half_width(std::span<const double> per_run);

struct MetricSummary {
  std::string metric;
  std::vector<double> per_run;
  double mean = 0.0;
  double ci_half_width = 0.0;
  std::size_t na_folds = 0;
};

MetricSummary summarize_metric(std::string name, std::vector<double> per_run, std::size_t na_folds = 0);

// Reference to one fused model of a pipeline.
struct FusionTarget {
  Pipeline pipeline = Pipeline::LRGBDT;
  std::string group = "All";
  FusionRule rule = FusionRule::Selective;

  [[nodiscard]] std::string model_name() const;
};

struct EvalConfig {
  std::vector<Pipeline> pipelines = {Pipeline::LRGBDT, Pipeline::SVM, Pipeline::RF};
  std::vector<FusionRule> rules = {FusionRule::Majority, FusionRule::AverageProb, FusionRule::Selective};
  std::vector<FusionGroup> groups = default_fusion_groups();
  std::vector<ModalityFeature> unimodal = modality_menu();
  std::size_t runs = 100;
  std::uint64_t seed_base = 42;
  std::size_t threads = 0;  // 0: hardware concurrency
  TiePolicy tie = TiePolicy::Positive;
  HmmFitOptions hmm;
  LrParams lr;
  GbdtParams gbdt;
  SvmParams svm;
  RfParams rf;

  // Attribution of one fused model on every test fold.
  std::optional<FusionTarget> explain;
  std::size_t permutations = 128;

  // Fairness audit of one fused model.
  std::optional<FusionTarget> audit;
  std::vector<SensitiveAttribute> attributes = {SensitiveAttribute::Sex, SensitiveAttribute::AgeGroup,
                                                SensitiveAttribute::YoeGroup, SensitiveAttribute::Diagnosis};
  bool mitigate = true;

  bool keep_predictions = true;
};

struct ModelResult {
  Pipeline pipeline = Pipeline::LRGBDT;
  std::string model;  // feature name, or "<rule>:<group>"
  bool fused = false;
  MetricSummary auroc;
  MetricSummary accuracy;
  MetricSummary macro_f1;
};

struct PredictionRow {
  std::size_t run = 0;
  std::size_t fold = 0;
  Pipeline pipeline = Pipeline::LRGBDT;
  std::string model;
  std::string participant_id;
  int label = 0;
  double score = 0.0;
  int pred = 0;
};

// Everything one (run, fold) unit reports besides predictions.
struct FoldArtifact {
  std::size_t run = 0;
  std::size_t fold = 0;
  bool skipped = false;
  std::string skip_reason;
  // key: "<pipeline>/<model>"
  std::map<std::string, std::optional<double>> test_auroc;
  std::map<std::string, std::optional<double>> val_auroc;
  std::map<std::string, std::vector<std::string>> selected;  // per fused selective model
  std::optional<ShapReport> shap;
};

struct ShapSummary {
  FusionTarget target;
  std::vector<std::string> modalities;
  std::vector<std::size_t> dims;
  std::vector<std::vector<double>> per_run;  // run x modality, mean over the run's folds
  std::vector<double> mean;
  std::vector<double> ci_half_width;
  std::size_t permutations = 0;
};

struct FairnessQuantity {
  std::string attribute;
  std::string phase;
  std::string quantity;  // EOR, DPR, MeanSubgroupF1, TPR, FPR, SelectionRate, F1, Threshold
  std::string group;     // empty for cohort-level quantities
  MetricSummary summary;
  std::size_t na_runs = 0;
};

struct FairnessSummary {
  FusionTarget target;
  std::vector<FairnessQuantity> quantities;
  std::string method;
};

struct TaskResult {
  std::string task;
  std::size_t participants = 0;
  std::size_t positives = 0;
  std::vector<ModelResult> models;
  std::vector<PredictionRow> predictions;
  std::vector<FoldArtifact> folds;
  std::size_t skipped_folds = 0;
  std::size_t hmm_truncations = 0;
  std::optional<ShapSummary> shap;
  std::optional<FairnessSummary> fairness;

  [[nodiscard]] const ModelResult& model(Pipeline pipeline, std::string_view name) const;
};

// Nested cross-validation of one task. Standardizers, encoders, HMMs and
// learners are refit on each fold's training ids only.
TaskResult run_task(const Cohort& cohort, const std::string& task, const EvalConfig& config);

// Fused model with the highest mean AUROC (first in result order on ties).
FusionTarget best_fusion(const TaskResult& result);

// --- building blocks, exposed for leakage tests --------------------------

// Labeled participants of a task in cohort order.
struct TaskData {
  std::vector<std::size_t> members;  // cohort participant indices
  std::vector<int> labels;
};

TaskData task_data(const Cohort& cohort, const TaskSpec& spec);

// Summaries that need no fitting (pooled statistics, quantiles, raw rows),
// computed once per participant.
class SummaryCache {
 public:
  SummaryCache(const Cohort& cohort, std::span<const ModalityFeature> features);
  [[nodiscard]] const std::vector<double>& get(std::size_t participant, const ModalityFeature& mf) const;

 private:
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> values_;
};

// Models fitted on the training ids of one fold for one feature.
struct FoldFeatureModels {
  ModalityFeature feature;
  std::optional<HmmModel> hmm;
  std::optional<DemographicEncoder> encoder;
  Standardizer standardizer;
  Matrix train, validation, test;  // standardized
  std::map<Pipeline, FittedModel> learners;
};

FoldFeatureModels fit_fold_feature(const Cohort& cohort, const TaskData& data, const FoldPlan& plan,
                                   const ModalityFeature& mf, const SummaryCache& cache, const EvalConfig& config,
                                   std::size_t* truncations = nullptr);

}  // namespace mmscreen
