#include "mmscreen/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "mmscreen/error.hpp"

namespace mmscreen {

namespace {

struct Moments {
  double mean;
  double sd;
};

// Published per-diagnosis means and standard deviations (NC, MCI).
struct OutcomeModel {
  std::string name;
  Moments nc;
  Moments mci;
  double lo;
  double hi;
  double step;  // rounding resolution
};

const std::vector<OutcomeModel>& outcome_models() {
  static const std::vector<OutcomeModel> models = {
      {"MoCA", {26.58, 2.51}, {22.96, 3.57}, 0.0, 30.0, 1.0},
      {"LSNS", {15.12, 6.08}, {13.36, 5.71}, 0.0, 30.0, 1.0},
      {"Neuroticism", {15.35, 9.16}, {17.27, 7.89}, 0.0, 48.0, 1.0},
      {"NegativeAffect", {46.06, 8.29}, {51.08, 12.82}, 20.0, 80.0, 0.1},
      {"SocialSatisfaction", {49.64, 10.70}, {48.35, 13.12}, 20.0, 80.0, 0.1},
      {"PsychologicalWellbeing", {54.66, 7.17}, {47.08, 11.12}, 20.0, 80.0, 0.1},
  };
  return models;
}

constexpr double kMciRate = 22.0 / 39.0;
constexpr double kFemaleRateNc = 15.0 / 17.0;
constexpr double kFemaleRateMci = 14.0 / 22.0;
constexpr double kCdrHalfRateNc = 3.0 / 17.0;
constexpr double kCdrHalfRateMci = 16.0 / 22.0;

double round_to(double v, double step) { return std::round(v / step) * step; }

double draw_outcome(const OutcomeModel& m, Diagnosis dx, Rng& rng) {
  const auto& mo = dx == Diagnosis::NC ? m.nc : m.mci;
  return std::clamp(round_to(rng.normal(mo.mean, mo.sd), m.step), m.lo, m.hi);
}

std::string participant_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%03zu", i + 1);
  return buf;
}

std::vector<std::string> channel_names(const SynthFeatureSpec& spec) {
  if (spec.feature_set == FeatureSet::Demographics) return {"age", "sex_male", "years_education"};
  if (spec.feature_set == FeatureSet::rPPG && spec.dims == 1) return {"bpm"};
  std::vector<std::string> out;
  for (std::size_t c = 0; c < spec.dims; ++c) out.push_back("c" + std::to_string(c));
  return out;
}

std::uint64_t feature_key(FeatureSet fs) {
  return static_cast<std::uint64_t>(std::find(kAllFeatureSets.begin(), kAllFeatureSets.end(), fs) -
                                    kAllFeatureSets.begin());
}

void validate(const SynthConfig& c) {
  if (c.n < 10) throw ValidationError("synth: n must be at least 10");
  if (!(c.positive_rate > 0.0 && c.positive_rate < 1.0)) throw ValidationError("synth: positive_rate must be in (0, 1)");
  bool known = false;
  for (const auto& t : default_tasks()) known = known || t.name == c.signal_task;
  if (!known) throw ValidationError("synth: unknown signal_task '" + c.signal_task + "'");
  std::vector<FeatureSet> seen;
  for (const auto& f : c.features) {
    const std::string name(to_string(f.feature_set));
    if (std::find(seen.begin(), seen.end(), f.feature_set) != seen.end()) {
      throw ValidationError("synth: feature set " + name + " listed twice");
    }
    seen.push_back(f.feature_set);
    if (f.dims == 0) throw ValidationError("synth: " + name + " needs at least one channel");
    if (f.effect < 0.0 || !std::isfinite(f.effect)) throw ValidationError("synth: " + name + " effect must be >= 0");
    if (is_temporal(f.feature_set) && (f.t_min < 20 || f.t_max > 2000 || f.t_min > f.t_max)) {
      throw ValidationError("synth: " + name + " length range must lie within [20, 2000]");
    }
    if (f.feature_set == FeatureSet::Demographics && f.dims != 3) {
      throw ValidationError("synth: Demographics has exactly 3 channels");
    }
  }
  if (!(c.self_transition > 0.0 && c.self_transition < 1.0)) throw ValidationError("synth: self_transition must be in (0, 1)");
  if (!(c.dynamics_effect >= 0.0 && c.dynamics_effect < c.self_transition)) {
    throw ValidationError("synth: dynamics_effect must be in [0, self_transition)");
  }
  if (c.bias && !std::isfinite(c.bias->shift)) throw ValidationError("synth: bias shift must be finite");
}

}  // namespace

SynthConfig default_synth_config(std::size_t n) {
  SynthConfig c;
  c.n = n;
  c.features = {
      {FeatureSet::EmotionAUs, 8, 40, 80, false, 0.0},
      {FeatureSet::DINOv2, 64, 40, 80, false, 0.0},
      {FeatureSet::rPPG, 1, 40, 80, false, 0.0},
      {FeatureSet::Acoustic, 8, 40, 80, true, 1.0},
      {FeatureSet::WavLM, 64, 40, 80, true, 1.0},
      {FeatureSet::RoBERTaSentiment, 3, 40, 80, false, 0.0},
      {FeatureSet::LLaMA, 128, 1, 1, false, 0.0},
      {FeatureSet::Demographics, 3, 1, 1, false, 0.0},
  };
  return c;
}

SynthConfig parse_synth_config(std::string_view json_text) {
  SynthConfig c = default_synth_config();
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw ValidationError("synth config must be a JSON object");
    c.n = j.value("n", c.n);
    c.seed = j.value("seed", c.seed);
    c.signal_task = j.value("signal_task", c.signal_task);
    c.positive_rate = j.value("positive_rate", c.positive_rate);
    c.state_spread = j.value("state_spread", c.state_spread);
    c.self_transition = j.value("self_transition", c.self_transition);
    c.dynamics_effect = j.value("dynamics_effect", c.dynamics_effect);
    if (j.contains("features")) {
      c.features.clear();
      for (const auto& f : j.at("features")) {
        SynthFeatureSpec s;
        s.feature_set = parse_feature_set(f.at("feature_set").get<std::string>());
        s.dims = f.value("dims", std::size_t{1});
        s.t_min = f.value("t_min", s.t_min);
        s.t_max = f.value("t_max", s.t_max);
        s.informative = f.value("informative", false);
        s.effect = f.value("effect", 0.0);
        if (!is_temporal(s.feature_set)) s.t_min = s.t_max = 1;
        c.features.push_back(s);
      }
    }
    if (j.contains("bias") && !j.at("bias").is_null()) {
      const auto& b = j.at("bias");
      c.bias = BiasPlant{parse_sensitive_attribute(b.at("attribute").get<std::string>()),
                         b.at("group").get<std::string>(), b.at("shift").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["n"] = c.n;
  j["seed"] = c.seed;
  j["signal_task"] = c.signal_task;
  j["positive_rate"] = c.positive_rate;
  j["state_spread"] = c.state_spread;
  j["self_transition"] = c.self_transition;
  j["dynamics_effect"] = c.dynamics_effect;
  j["features"] = nlohmann::ordered_json::array();
  for (const auto& f : c.features) {
    nlohmann::ordered_json e;
    e["feature_set"] = std::string(to_string(f.feature_set));
    e["dims"] = f.dims;
    if (is_temporal(f.feature_set)) {
      e["t_min"] = f.t_min;
      e["t_max"] = f.t_max;
    }
    e["informative"] = f.informative;
    e["effect"] = f.effect;
    j["features"].push_back(e);
  }
  if (c.bias) {
    j["bias"] = {{"attribute", std::string(to_string(c.bias->attribute))},
                 {"group", c.bias->group},
                 {"shift", c.bias->shift}};
  }
  return j.dump(2) + "\n";
}

HmmModel generative_hmm(const SynthConfig& config, const SynthFeatureSpec& spec) {
  constexpr std::size_t k = 4;
  Rng rng(derive_seed(config.seed, {0x67656eULL, feature_key(spec.feature_set)}));
  HmmModel m;
  m.states = k;
  m.dims = spec.dims;
  m.means = Matrix(k, spec.dims);
  m.variances = Matrix(k, spec.dims, 1.0);
  for (auto& v : m.means.data()) v = rng.normal(0.0, config.state_spread);
  m.transition = Matrix(k, k, (1.0 - config.self_transition) / static_cast<double>(k - 1));
  for (std::size_t s = 0; s < k; ++s) m.transition(s, s) = config.self_transition;
  m.initial.assign(k, 1.0 / static_cast<double>(k));
  m.seed = config.seed;
  return m;
}

Matrix sample_hmm(const HmmModel& model, std::size_t t, Rng& rng, double mean_shift) {
  Matrix out(t, model.dims);
  auto draw = [&](std::span<const double> probs) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t s = 0; s < probs.size(); ++s) {
      acc += probs[s];
      if (u < acc) return s;
    }
    return probs.size() - 1;
  };
  std::size_t state = draw(model.initial);
  for (std::size_t r = 0; r < t; ++r) {
    if (r > 0) state = draw(model.transition.row(state));
    for (std::size_t c = 0; c < model.dims; ++c) {
      out(r, c) = model.means(state, c) + mean_shift + std::sqrt(model.variances(state, c)) * rng.normal();
    }
  }
  return out;
}

Cohort generate(const SynthConfig& config) {
  validate(config);
  const auto tasks = default_tasks();
  std::vector<HmmModel> gens, gens_positive;
  for (const auto& f : config.features) {
    gens.push_back(generative_hmm(config, f));
    auto pos = gens.back();
    if (f.informative) {
      const double stay = config.self_transition - config.dynamics_effect;
      const double move = (1.0 - stay) / static_cast<double>(pos.states - 1);
      for (std::size_t a = 0; a < pos.states; ++a) {
        for (std::size_t b = 0; b < pos.states; ++b) pos.transition(a, b) = a == b ? stay : move;
      }
    }
    gens_positive.push_back(std::move(pos));
  }

  std::vector<ParticipantRecord> people;
  std::vector<FeatureSeries> series;
  for (std::size_t i = 0; i < config.n; ++i) {
    Rng demo(derive_seed(config.seed, {i, 1}));
    ParticipantRecord p;
    p.id = participant_id(i);
    p.diagnosis = demo.uniform() < kMciRate ? Diagnosis::MCI : Diagnosis::NC;
    const bool nc = p.diagnosis == Diagnosis::NC;
    p.sex = demo.uniform() < (nc ? kFemaleRateNc : kFemaleRateMci) ? Sex::F : Sex::M;
    p.age = std::max(60.0, round_to(nc ? demo.normal(79.85, 4.39) : demo.normal(81.53, 4.81), 0.1));
    p.years_education =
        static_cast<int>(std::clamp(std::round(nc ? demo.normal(15.47, 2.12) : demo.normal(15.41, 2.54)), 8.0, 22.0));

    Rng scores(derive_seed(config.seed, {i, 2}));
    const bool positive = scores.uniform() < config.positive_rate;
    const double cdr_rate = nc ? kCdrHalfRateNc : kCdrHalfRateMci;
    p.scores["CDR"] = scores.uniform() < cdr_rate ? 0.5 : 0.0;
    for (const auto& m : outcome_models()) p.scores[m.name] = draw_outcome(m, p.diagnosis, scores);
    const auto& signal = *std::find_if(tasks.begin(), tasks.end(), [&](const TaskSpec& t) { return t.name == config.signal_task; });
    if (signal.name == "CDR") {
      p.scores["CDR"] = positive ? 0.5 : 0.0;
    } else {
      const auto& m = *std::find_if(outcome_models().begin(), outcome_models().end(),
                                    [&](const OutcomeModel& o) { return o.name == signal.name; });
      double v = p.scores[m.name];
      for (int tries = 0; dichotomize(v, signal) != positive && tries < 10000; ++tries) {
        v = draw_outcome(m, p.diagnosis, scores);
      }
      if (dichotomize(v, signal) != positive) {
        // Tail too thin for rejection: step across the cutoff.
        v = positive ? (signal.op == CompareOp::LT ? signal.cutoff - m.step : signal.cutoff)
                     : signal.cutoff + m.step;
      }
      p.scores[m.name] = v;
    }

    for (std::size_t f = 0; f < config.features.size(); ++f) {
      const auto& spec = config.features[f];
      Rng rng(derive_seed(config.seed, {i, 100 + feature_key(spec.feature_set)}));
      const double shift = spec.informative && positive ? spec.effect : 0.0;
      FeatureSeries s;
      s.participant_id = p.id;
      s.feature_set = spec.feature_set;
      s.channel_names = channel_names(spec);
      if (spec.feature_set == FeatureSet::Demographics) {
        s.data = Matrix(1, 3, std::vector<double>{p.age, p.sex == Sex::M ? 1.0 : 0.0,
                                                   static_cast<double>(p.years_education)});
      } else if (!is_temporal(spec.feature_set)) {
        s.data = Matrix(1, spec.dims);
        for (auto& v : s.data.data()) v = rng.normal(shift, 1.0);
      } else {
        const std::size_t t = spec.t_min + static_cast<std::size_t>(rng.below(spec.t_max - spec.t_min + 1));
        s.data = sample_hmm(positive ? gens_positive[f] : gens[f], t, rng, shift);
        if (spec.feature_set == FeatureSet::rPPG) {
          for (auto& v : s.data.data()) v = 72.0 + 4.0 * v;
        }
      }
      series.push_back(std::move(s));
    }
    people.push_back(std::move(p));
  }

  std::stable_sort(series.begin(), series.end(), [&](const FeatureSeries& a, const FeatureSeries& b) {
    if (a.participant_id != b.participant_id) return a.participant_id < b.participant_id;
    return feature_key(a.feature_set) < feature_key(b.feature_set);
  });

  CohortConfig cc;
  cc.tasks = tasks;
  Cohort cohort(std::move(people), std::move(series), cc);
  std::vector<std::string> order;
  for (const auto& t : tasks) order.push_back(t.name);
  cohort.set_outcome_order(order);

  if (config.bias && config.bias->shift != 0.0) {
    std::vector<FeatureSet> targets;
    for (const auto& f : config.features) {
      if (f.informative) targets.push_back(f.feature_set);
    }
    cohort = plant_bias(cohort, config.bias->attribute, config.bias->group, config.bias->shift, targets);
  }
  return cohort;
}

Cohort generate_to(const SynthConfig& config, const std::filesystem::path& root) {
  auto cohort = generate(config);
  write_cohort(cohort, root);
  return cohort;
}

Cohort plant_bias(const Cohort& cohort, SensitiveAttribute attribute, std::string_view group, double shift,
                  std::span<const FeatureSet> targets) {
  const auto spec = cohort.config().sensitive_spec(attribute);
  std::vector<std::string> members;
  std::vector<std::string> seen;
  for (const auto& p : cohort.participants()) {
    const auto g = bin_sensitive(p, spec);
    if (g == group) members.push_back(p.id);
    if (std::find(seen.begin(), seen.end(), g) == seen.end()) seen.push_back(g);
  }
  if (members.empty()) {
    std::string valid;
    for (const auto& g : seen) valid += (valid.empty() ? "" : ", ") + g;
    throw ValidationError("plant_bias: no participant in group '" + std::string(group) + "' of " +
                          std::string(to_string(attribute)) + " (present: " + valid + ")");
  }
  if (shift == 0.0) return cohort;
  auto series = cohort.series();
  for (auto& s : series) {
    if (std::find(targets.begin(), targets.end(), s.feature_set) == targets.end()) continue;
    if (std::find(members.begin(), members.end(), s.participant_id) == members.end()) continue;
    for (auto& v : s.data.data()) v += shift;
  }
  Cohort out(cohort.participants(), std::move(series), cohort.config());
  out.set_outcome_order(cohort.outcome_names());
  return out;
}

}  // namespace mmscreen
