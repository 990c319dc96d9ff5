#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmscreen/cohort.hpp"
#include "mmscreen/hmm.hpp"
#include "mmscreen/rng.hpp"

namespace mmscreen {

struct SynthFeatureSpec {
  FeatureSet feature_set = FeatureSet::EmotionAUs;
  std::size_t dims = 1;
  std::size_t t_min = 40;  // ignored for single-row sets
  std::size_t t_max = 80;
  bool informative = false;
  double effect = 0.0;  // added to every channel for positive participants

  friend bool operator==(const SynthFeatureSpec&, const SynthFeatureSpec&) = default;
};

struct BiasPlant {
  SensitiveAttribute attribute = SensitiveAttribute::Sex;
  std::string group;
  double shift = 0.0;

  friend bool operator==(const BiasPlant&, const BiasPlant&) = default;
};

struct SynthConfig {
  std::size_t n = 39;
  std::uint64_t seed = 42;
  std::string signal_task = "MoCA";  // its labels drive the informative features
  double positive_rate = 0.5;
  double state_spread = 1.5;     // sd of generative HMM state means
  double self_transition = 0.9;  // diagonal of the generative transition matrix
  double dynamics_effect = 0.3;  // informative sets: positives use self_transition - dynamics_effect
  std::vector<SynthFeatureSpec> features;
  std::optional<BiasPlant> bias;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

// Demographics and outcome distributions follow the published cohort table
// (NC 17 / MCI 22, 29 F / 10 M, age 80.7 +- 4.6, education 15.4 +- 2.3).
// Audio (Acoustic, WavLM) carries the signal; everything else is noise.
SynthConfig default_synth_config(std::size_t n = 39);

SynthConfig parse_synth_config(std::string_view json_text);
std::string synth_config_to_json(const SynthConfig& config);

// Generative four-state HMM of one feature set (class-independent part).
HmmModel generative_hmm(const SynthConfig& config, const SynthFeatureSpec& spec);

// Draws a length-t sequence from an HMM.
Matrix sample_hmm(const HmmModel& model, std::size_t t, Rng& rng, double mean_shift = 0.0);

// Each participant draws from its own substream keyed by (seed, index).
Cohort generate(const SynthConfig& config);
Cohort generate_to(const SynthConfig& config, const std::filesystem::path& root);

// Adds `shift` to every value of the given feature sets for participants in
// `group`. Throws ValidationError when no participant is in the group.
Cohort plant_bias(const Cohort& cohort, SensitiveAttribute attribute, std::string_view group, double shift,
                  std::span<const FeatureSet> targets);

}  // namespace mmscreen
