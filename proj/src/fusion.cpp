#include "mmscreen/fusion.hpp"

#include <algorithm>

#include "mmscreen/error.hpp"

namespace mmscreen {

std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::LRGBDT: return "LRGBDT";
    case Pipeline::SVM: return "SVM";
    case Pipeline::RF: return "RF";
  }
  return "?";
}

Pipeline parse_pipeline(std::string_view text) {
  if (text == "LRGBDT") return Pipeline::LRGBDT;
  if (text == "SVM") return Pipeline::SVM;
  if (text == "RF") return Pipeline::RF;
  throw ValidationError("unknown pipeline '" + std::string(text) + "' (valid: LRGBDT, SVM, RF)");
}

std::string_view to_string(FusionRule r) {
  switch (r) {
    case FusionRule::Majority: return "Majority";
    case FusionRule::AverageProb: return "AverageProb";
    case FusionRule::Selective: return "Selective";
  }
  return "?";
}

FusionRule parse_fusion_rule(std::string_view text) {
  if (text == "Majority") return FusionRule::Majority;
  if (text == "AverageProb") return FusionRule::AverageProb;
  if (text == "Selective") return FusionRule::Selective;
  throw ValidationError("unknown fusion rule '" + std::string(text) + "' (valid: Majority, AverageProb, Selective)");
}

std::string_view modality_of(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::EmotionAUs:
    case FeatureSet::DINOv2: return "Face";
    case FeatureSet::rPPG: return "Cardiovascular";
    case FeatureSet::Acoustic:
    case FeatureSet::WavLM: return "Audio";
    case FeatureSet::RoBERTaSentiment:
    case FeatureSet::LLaMA: return "Language";
    case FeatureSet::Demographics: return "Demographics";
  }
  return "?";
}

LearnerKind route(const ModalityFeature& feature, std::size_t summarized_dim, Pipeline pipeline) {
  (void)canonical_index(feature);  // rejects features off the menu
  switch (pipeline) {
    case Pipeline::LRGBDT: return summarized_dim < kLowDimLimit ? LearnerKind::LR : LearnerKind::GBDT;
    case Pipeline::SVM: return LearnerKind::SVM;
    case Pipeline::RF: return LearnerKind::RF;
  }
  throw RuntimeError("route: unknown pipeline");
}

std::vector<FusionGroup> default_fusion_groups() {
  std::vector<FusionGroup> groups = {{"All", {}}, {"A+L+D", {}}, {"F+C+D", {}}};
  for (const auto& mf : modality_menu()) {
    const auto m = modality_of(mf.feature_set);
    groups[0].members.push_back(mf);
    if (m == "Audio" || m == "Language" || m == "Demographics") groups[1].members.push_back(mf);
    if (m == "Face" || m == "Cardiovascular" || m == "Demographics") groups[2].members.push_back(mf);
  }
  return groups;
}

const FusionGroup& find_group(std::span<const FusionGroup> groups, std::string_view name) {
  for (const auto& g : groups) {
    if (g.name == name) return g;
  }
  std::string valid;
  for (const auto& g : groups) valid += (valid.empty() ? "" : ", ") + g.name;
  throw ValidationError("unknown fusion group '" + std::string(name) + "' (valid: " + valid + ")");
}

int label_from_score(double score, TiePolicy tie) {
  if (score > 0.5) return 1;
  if (score < 0.5) return 0;
  return tie == TiePolicy::Positive ? 1 : 0;
}

FusedDecision fuse_majority(std::span<const int> votes, TiePolicy tie) {
  if (votes.empty()) throw RuntimeError("fuse_majority: no votes");
  const auto pos = std::count(votes.begin(), votes.end(), 1);
  const auto neg = static_cast<std::ptrdiff_t>(votes.size()) - pos;
  FusedDecision out;
  out.score = static_cast<double>(pos) / static_cast<double>(votes.size());
  out.label = pos > neg ? 1 : (pos < neg ? 0 : (tie == TiePolicy::Positive ? 1 : 0));
  return out;
}

FusedDecision fuse_average(std::span<const double> probs) {
  if (probs.empty()) throw RuntimeError("fuse_average: no probabilities");
  // Identical inputs return that value exactly.
  const bool same = std::all_of(probs.begin(), probs.end(), [&](double p) { return p == probs.front(); });
  double mean = probs.front();
  if (!same) {
    double sum = 0.0;
    for (double p : probs) sum += p;
    mean = sum / static_cast<double>(probs.size());
  }
  return {mean >= 0.5 ? 1 : 0, mean, {}};
}

std::vector<ModalityFeature> select_members(
    const std::map<ModalityFeature, std::optional<double>, CanonicalOrder>& val_auroc) {
  std::vector<ModalityFeature> selected;
  for (const auto& [mf, auc] : val_auroc) {
    if (auc.value_or(0.5) > 0.5) selected.push_back(mf);
  }
  if (selected.empty() && !val_auroc.empty()) {
    auto best = val_auroc.begin();
    for (auto it = val_auroc.begin(); it != val_auroc.end(); ++it) {
      if (it->second.value_or(0.5) > best->second.value_or(0.5)) best = it;
    }
    selected.push_back(best->first);
  }
  return selected;
}

FusedDecision fuse_selective(const std::map<ModalityFeature, std::optional<double>, CanonicalOrder>& val_auroc,
                             const std::map<ModalityFeature, int, CanonicalOrder>& test_votes, TiePolicy tie) {
  auto selected = select_members(val_auroc);
  std::vector<int> votes;
  for (const auto& mf : selected) {
    auto it = test_votes.find(mf);
    if (it == test_votes.end()) throw RuntimeError("fuse_selective: no vote for " + mf.name());
    votes.push_back(it->second);
  }
  auto out = fuse_majority(votes, tie);
  out.selected = std::move(selected);
  return out;
}

FusedDecision fuse(const FusionConfig& config, const std::map<ModalityFeature, double, CanonicalOrder>& probs,
                   const std::map<ModalityFeature, std::optional<double>, CanonicalOrder>& val_auroc) {
  if (config.members.empty()) throw ValidationError("fusion needs at least one member");
  auto prob_of = [&](const ModalityFeature& mf) {
    auto it = probs.find(mf);
    if (it == probs.end()) throw RuntimeError("fuse: no probability for " + mf.name());
    return it->second;
  };
  switch (config.rule) {
    case FusionRule::Majority: {
      std::vector<int> votes;
      for (const auto& mf : config.members) votes.push_back(vote(prob_of(mf)));
      auto out = fuse_majority(votes, config.tie);
      out.selected = config.members;
      return out;
    }
    case FusionRule::AverageProb: {
      std::vector<double> p;
      for (const auto& mf : config.members) p.push_back(prob_of(mf));
      auto out = fuse_average(p);
      out.selected = config.members;
      return out;
    }
    case FusionRule::Selective: {
      std::map<ModalityFeature, std::optional<double>, CanonicalOrder> aucs;
      std::map<ModalityFeature, int, CanonicalOrder> votes;
      for (const auto& mf : config.members) {
        auto it = val_auroc.find(mf);
        aucs[mf] = it == val_auroc.end() ? std::nullopt : it->second;
        votes[mf] = vote(prob_of(mf));
      }
      return fuse_selective(aucs, votes, config.tie);
    }
  }
  throw RuntimeError("fuse: unknown rule");
}

}  // namespace mmscreen
