#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmscreen/learners.hpp"
#include "mmscreen/temporal.hpp"

namespace mmscreen {

enum class Pipeline { LRGBDT, SVM, RF };
enum class FusionRule { Majority, AverageProb, Selective };
enum class TiePolicy { Positive, Negative };

std::string_view to_string(Pipeline p);
Pipeline parse_pipeline(std::string_view text);
std::string_view to_string(FusionRule r);
FusionRule parse_fusion_rule(std::string_view text);

// Coarse modality of a feature set: Face, Cardiovascular, Audio, Language,
// Demographics.
std::string_view modality_of(FeatureSet fs);

// Summarized dimension below which the LR/GBDT pipeline uses LR.
inline constexpr std::size_t kLowDimLimit = 100;

LearnerKind route(const ModalityFeature& feature, std::size_t summarized_dim, Pipeline pipeline);

struct FusionGroup {
  std::string name;
  std::vector<ModalityFeature> members;  // canonical order
};

// All twelve features; Audio+Language+Demographics; Face+Cardiovascular+Demographics.
std::vector<FusionGroup> default_fusion_groups();
const FusionGroup& find_group(std::span<const FusionGroup> groups, std::string_view name);

struct FusionConfig {
  FusionRule rule = FusionRule::Majority;
  std::vector<ModalityFeature> members;
  TiePolicy tie = TiePolicy::Positive;
};

struct FusedDecision {
  int label = 0;
  double score = 0.0;  // vote fraction or mean probability
  std::vector<ModalityFeature> selected;
};

// Hard vote of one per-feature model.
inline int vote(double probability) { return probability >= 0.5 ? 1 : 0; }

// Label implied by a fused score under the tie policy.
int label_from_score(double score, TiePolicy tie);

FusedDecision fuse_majority(std::span<const int> votes, TiePolicy tie = TiePolicy::Positive);
FusedDecision fuse_average(std::span<const double> probs);

// Members with validation AUROC strictly above 0.5; when none qualifies the
// best one (canonical order on ties). A missing AUROC counts as 0.5.
std::vector<ModalityFeature> select_members(const std::map<ModalityFeature, std::optional<double>, CanonicalOrder>& val_auroc);

FusedDecision fuse_selective(const std::map<ModalityFeature, std::optional<double>, CanonicalOrder>& val_auroc,
                             const std::map<ModalityFeature, int, CanonicalOrder>& test_votes,
                             TiePolicy tie = TiePolicy::Positive);

// Fuses one sample given every member's positive-class probability.
FusedDecision fuse(const FusionConfig& config, const std::map<ModalityFeature, double, CanonicalOrder>& probs,
                   const std::map<ModalityFeature, std::optional<double>, CanonicalOrder>& val_auroc = {});

}  // namespace mmscreen
