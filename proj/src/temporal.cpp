#include "mmscreen/temporal.hpp"

#include <algorithm>
#include <cmath>

#include "mmscreen/error.hpp"

namespace mmscreen {

std::string_view to_string(SummaryKind k) {
  switch (k) {
    case SummaryKind::Stats: return "Stats";
    case SummaryKind::Quantiles: return "Quantiles";
    case SummaryKind::HmmDynamics: return "HmmDynamics";
    case SummaryKind::Raw: return "Raw";
  }
  return "?";
}

std::string ModalityFeature::name() const {
  std::string n(to_string(feature_set));
  if (kind == SummaryKind::HmmDynamics) n += "+HMM";
  return n;
}

const std::vector<ModalityFeature>& modality_menu() {
  static const std::vector<ModalityFeature> menu = {
      {FeatureSet::Demographics, SummaryKind::Raw},
      {FeatureSet::DINOv2, SummaryKind::Stats},
      {FeatureSet::EmotionAUs, SummaryKind::Stats},
      {FeatureSet::EmotionAUs, SummaryKind::HmmDynamics},
      {FeatureSet::rPPG, SummaryKind::Quantiles},
      {FeatureSet::rPPG, SummaryKind::HmmDynamics},
      {FeatureSet::WavLM, SummaryKind::Stats},
      {FeatureSet::Acoustic, SummaryKind::Stats},
      {FeatureSet::Acoustic, SummaryKind::HmmDynamics},
      {FeatureSet::LLaMA, SummaryKind::Raw},
      {FeatureSet::RoBERTaSentiment, SummaryKind::Stats},
      {FeatureSet::RoBERTaSentiment, SummaryKind::HmmDynamics},
  };
  return menu;
}

std::size_t canonical_index(const ModalityFeature& mf) {
  const auto& menu = modality_menu();
  auto it = std::find(menu.begin(), menu.end(), mf);
  if (it == menu.end()) {
    throw ValidationError("modality feature " + mf.name() + "/" + std::string(to_string(mf.kind)) +
                          " is not on the modality menu");
  }
  return static_cast<std::size_t>(it - menu.begin());
}

ModalityFeature parse_modality_feature(std::string_view name) {
  for (const auto& mf : modality_menu()) {
    if (mf.name() == name) return mf;
  }
  std::string valid;
  for (const auto& mf : modality_menu()) {
    if (!valid.empty()) valid += ", ";
    valid += mf.name();
  }
  throw ValidationError("unknown modality feature '" + std::string(name) + "' (valid: " + valid + ")");
}

SummaryVector pool_stats(const FeatureSeries& series) {
  const std::size_t t = series.data.rows();
  const std::size_t d = series.data.cols();
  if (t == 0) throw RuntimeError("pool_stats: empty series");
  SummaryVector out{series.participant_id, series.feature_set, SummaryKind::Stats, std::vector<double>(2 * d, 0.0)};
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < t; ++r) sum += series.data(r, c);
    const double mean = sum / static_cast<double>(t);
    double ss = 0.0;
    for (std::size_t r = 0; r < t; ++r) {
      const double dev = series.data(r, c) - mean;
      ss += dev * dev;
    }
    out.values[c] = mean;
    out.values[d + c] = std::sqrt(ss / static_cast<double>(t));
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw RuntimeError("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw RuntimeError("quantile level outside [0, 1]");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SummaryVector pool_quantiles(const FeatureSeries& series, std::span<const double> probs) {
  const std::size_t t = series.data.rows();
  const std::size_t d = series.data.cols();
  if (t == 0) throw RuntimeError("pool_quantiles: empty series");
  SummaryVector out{series.participant_id, series.feature_set, SummaryKind::Quantiles, {}};
  out.values.reserve(d * probs.size());
  std::vector<double> column(t);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < t; ++r) column[r] = series.data(r, c);
    std::sort(column.begin(), column.end());
    for (double p : probs) out.values.push_back(quantile_sorted(column, p));
  }
  return out;
}

FeatureSeries resample_uniform(const FeatureSeries& series, std::size_t target_len) {
  const std::size_t t = series.data.rows();
  if (t == 0) throw RuntimeError("resample_uniform: empty series");
  if (target_len == 0) throw RuntimeError("resample_uniform: target length must be >= 1");
  FeatureSeries out = series;
  out.data = Matrix(target_len, series.data.cols());
  for (std::size_t i = 0; i < target_len; ++i) {
    std::size_t src = 0;
    if (target_len > 1) {
      // round(i*(t-1)/(target_len-1)) with halves rounded up, in integers.
      const std::size_t num = 2 * i * (t - 1) + (target_len - 1);
      src = num / (2 * (target_len - 1));
    }
    auto from = series.data.row(src);
    std::copy(from.begin(), from.end(), out.data.row(i).begin());
  }
  return out;
}

SummaryVector raw_summary(const FeatureSeries& series) {
  if (series.data.rows() != 1) {
    throw RuntimeError("raw summary requires a single-row series (" + std::string(to_string(series.feature_set)) +
                       " has " + std::to_string(series.data.rows()) + ")");
  }
  auto row = series.data.row(0);
  return {series.participant_id, series.feature_set, SummaryKind::Raw, std::vector<double>(row.begin(), row.end())};
}

}  // namespace mmscreen
