#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mmscreen/cohort.hpp"

namespace mmscreen {

enum class SummaryKind { Stats, Quantiles, HmmDynamics, Raw };

std::string_view to_string(SummaryKind k);

// A participant-level input to one per-feature classifier: a feature set
// paired with the way it is summarized over time.
struct ModalityFeature {
  FeatureSet feature_set = FeatureSet::EmotionAUs;
  SummaryKind kind = SummaryKind::Stats;

  // Display name, e.g. "Acoustic" or "Acoustic+HMM".
  [[nodiscard]] std::string name() const;

  friend bool operator==(const ModalityFeature&, const ModalityFeature&) = default;
};

// The twelve modality features: Demographics; DINOv2, Emotion+AUs (+HMM);
// rPPG (+HMM); WavLM, Acoustic (+HMM); LLaMA, RoBERTa sentiment (+HMM).
// The position in this list is the canonical order used for tie-breaking.
const std::vector<ModalityFeature>& modality_menu();

// Canonical index into modality_menu(); throws for features not on the menu.
std::size_t canonical_index(const ModalityFeature& mf);

// Parses names produced by ModalityFeature::name(); throws ValidationError.
ModalityFeature parse_modality_feature(std::string_view name);

// Ordering by canonical menu position.
struct CanonicalOrder {
  bool operator()(const ModalityFeature& a, const ModalityFeature& b) const {
    return canonical_index(a) < canonical_index(b);
  }
};

struct SummaryVector {
  std::string participant_id;
  FeatureSet feature_set = FeatureSet::EmotionAUs;
  SummaryKind kind = SummaryKind::Stats;
  std::vector<double> values;
};

// Quantile levels used for heart-rate summaries.
inline constexpr std::array<double, 5> kHrvQuantiles = {0.05, 0.25, 0.50, 0.75, 0.95};

// Per-channel mean followed by per-channel population standard deviation.
SummaryVector pool_stats(const FeatureSeries& series);

// Per-channel quantiles, channel-major: all levels of channel 0, then
// channel 1, ... Linear interpolation at position p*(T-1).
SummaryVector pool_quantiles(const FeatureSeries& series, std::span<const double> probs);

// Quantile of one sorted sample under the same convention.
double quantile_sorted(std::span<const double> sorted, double p);

// Nearest-index sampling: row i of the output is input row
// round(i*(T-1)/(target_len-1)); target_len == 1 keeps the first row.
FeatureSeries resample_uniform(const FeatureSeries& series, std::size_t target_len);

// Single-row feature sets (LLaMA) pass through unchanged.
SummaryVector raw_summary(const FeatureSeries& series);

}  // namespace mmscreen
