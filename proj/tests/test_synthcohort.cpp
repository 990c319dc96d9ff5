#include <doctest.h>

#include "mmscreen/error.hpp"
#include "mmscreen/io.hpp"
#include "mmscreen/synthcohort.hpp"
#include "support.hpp"

using namespace mmscreen;

namespace {

std::map<std::string, std::string> snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = io::read_text_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("generated cohorts load back identically") {
  testing::TempDir dir("synth");
  const auto c = generate_to(default_synth_config(12), dir.path());
  CHECK(load_cohort(dir.path()) == c);
  CHECK(c.size() == 12);
  CHECK(c.feature_sets().size() == 8);
}

TEST_CASE("same seed gives a byte-identical directory") {
  testing::TempDir a("synth"), b("synth");
  generate_to(default_synth_config(10), a.path());
  generate_to(default_synth_config(10), b.path());
  CHECK(snapshot(a.path()) == snapshot(b.path()));
}

TEST_CASE("removing a participant leaves the others unchanged") {
  const auto big = generate(default_synth_config(12));
  const auto small = generate(default_synth_config(11));
  for (std::size_t i = 0; i < 11; ++i) {
    CHECK(small.participants()[i] == big.participants()[i]);
    for (auto fs : kAllFeatureSets) {
      const auto* x = small.find_series(small.participants()[i].id, fs);
      const auto* y = big.find_series(big.participants()[i].id, fs);
      REQUIRE(x);
      REQUIRE(y);
      CHECK(*x == *y);
    }
  }
}

TEST_CASE("config JSON round-trips and is validated") {
  auto c = default_synth_config(50);
  c.bias = BiasPlant{SensitiveAttribute::Sex, "F", 0.3};
  CHECK(parse_synth_config(synth_config_to_json(c)) == c);
  CHECK_THROWS_AS(parse_synth_config(R"({"n": 5})"), ValidationError);
  CHECK_THROWS_AS(parse_synth_config(R"({"signal_task": "Nope"})"), ValidationError);
  CHECK_THROWS_AS(parse_synth_config(R"({"features": [{"feature_set": "Acoustic", "dims": 2, "effect": -1}]})"),
                  ValidationError);
}

TEST_CASE("signal labels follow the configured rate") {
  auto c = default_synth_config(400);
  const auto cohort = generate(c);
  const auto& task = cohort.task("MoCA");
  std::size_t pos = 0;
  for (const auto& p : cohort.participants()) pos += *label_for(p, task);
  CHECK(static_cast<double>(pos) / 400.0 == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("bias plant with zero shift is a no-op") {
  const auto c = generate(default_synth_config(12));
  const FeatureSet targets[] = {FeatureSet::Acoustic};
  CHECK(plant_bias(c, SensitiveAttribute::Sex, "F", 0.0, targets) == c);
  CHECK_THROWS_AS(plant_bias(c, SensitiveAttribute::Sex, "X", 0.3, targets), ValidationError);
}

TEST_CASE("bias plant shifts only the group's target series") {
  const auto c = generate(default_synth_config(12));
  const FeatureSet targets[] = {FeatureSet::Acoustic};
  const auto b = plant_bias(c, SensitiveAttribute::Sex, "F", 0.3, targets);
  for (const auto& p : c.participants()) {
    for (auto fs : kAllFeatureSets) {
      const auto& x = c.find_series(p.id, fs)->data.data();
      const auto& y = b.find_series(p.id, fs)->data.data();
      const double shift = p.sex == Sex::F && fs == FeatureSet::Acoustic ? 0.3 : 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i] + shift).epsilon(1e-12));
    }
  }
}

TEST_CASE("planted HMM parameters come from the configured spread") {
  const auto cfg = default_synth_config();
  const auto m = generative_hmm(cfg, cfg.features[3]);
  CHECK(m.states == 4);
  for (std::size_t s = 0; s < 4; ++s) CHECK(m.transition(s, s) == cfg.self_transition);
  Rng rng(1);
  const auto x = sample_hmm(m, 50, rng);
  CHECK(x.rows() == 50);
  CHECK(x.cols() == m.dims);
}
