#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "mmscreen/attribution.hpp"
#include "mmscreen/cohort.hpp"
#include "mmscreen/fairness.hpp"
#include "mmscreen/rng.hpp"

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mmscreen_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline mmscreen::FeatureSeries series_of(std::string id, mmscreen::FeatureSet fs, std::size_t t, std::size_t d,
                                         std::vector<double> values) {
  mmscreen::FeatureSeries s;
  s.participant_id = std::move(id);
  s.feature_set = fs;
  s.data = mmscreen::Matrix(t, d, std::move(values));
  for (std::size_t c = 0; c < d; ++c) s.channel_names.push_back("c" + std::to_string(c));
  return s;
}

// O(n^2) pair count: wins + half ties over positive/negative pairs.
inline std::optional<double> auroc_pairs(std::span<const double> s, std::span<const int> y) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] == 1) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

// Exact Shapley values by subset enumeration against one background row.
inline std::vector<double> exact_shapley(const mmscreen::ModelFn& f, std::span<const double> x,
                                         std::span<const double> bg) {
  const std::size_t d = x.size();
  std::vector<double> value(std::size_t{1} << d);
  std::vector<double> z(d);
  for (std::size_t mask = 0; mask < value.size(); ++mask) {
    for (std::size_t j = 0; j < d; ++j) z[j] = (mask >> j & 1U) ? x[j] : bg[j];
    value[mask] = f(z);
  }
  std::vector<double> fact(d + 1, 1.0);
  for (std::size_t k = 1; k <= d; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> phi(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t mask = 0; mask < value.size(); ++mask) {
      if (mask >> j & 1U) continue;
      const auto s = static_cast<std::size_t>(__builtin_popcountll(mask));
      const double w = fact[s] * fact[d - s - 1] / fact[d];
      phi[j] += w * (value[mask | (std::size_t{1} << j)] - value[mask]);
    }
  }
  return phi;
}

// Ratio by enumerating every ordered pair of groups: min over pairs of a/b.
inline std::optional<double> min_pair_ratio(const std::vector<std::optional<double>>& rates) {
  std::optional<double> best;
  bool any = false;
  for (std::size_t a = 0; a < rates.size(); ++a) {
    for (std::size_t b = 0; b < rates.size(); ++b) {
      if (a == b || !rates[a] || !rates[b]) continue;
      double r;
      if (*rates[b] == 0.0) {
        if (*rates[a] != 0.0) continue;
        r = 1.0;
      } else {
        r = *rates[a] / *rates[b];
      }
      any = true;
      if (!best || r < *best) best = r;
    }
  }
  if (!any) return std::nullopt;
  return best;
}

}  // namespace testing
