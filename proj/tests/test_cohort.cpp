#include <doctest.h>

#include <fstream>

#include "mmscreen/cohort.hpp"
#include "mmscreen/error.hpp"
#include "mmscreen/io.hpp"
#include "support.hpp"

using namespace mmscreen;

namespace {

ParticipantRecord person(std::string id, double age, Sex sex, int yoe, Diagnosis dx, double moca) {
  ParticipantRecord p;
  p.id = std::move(id);
  p.age = age;
  p.sex = sex;
  p.years_education = yoe;
  p.diagnosis = dx;
  p.scores["MoCA"] = moca;
  return p;
}

Cohort three_person_cohort() {
  std::vector<ParticipantRecord> people = {person("A", 79.0, Sex::F, 16, Diagnosis::NC, 27),
                                           person("B", 81.5, Sex::M, 12, Diagnosis::MCI, 22),
                                           person("C", 85.0, Sex::F, 18, Diagnosis::MCI, 24)};
  std::vector<FeatureSeries> series;
  for (const auto& p : people) {
    series.push_back(testing::series_of(p.id, FeatureSet::rPPG, 3, 1, {70.0, 71.5, 72.25}));
    series.push_back(testing::series_of(p.id, FeatureSet::Acoustic, 2, 2, {0.1, -0.2, 0.3, 0.4}));
  }
  CohortConfig cfg;
  cfg.tasks = {{"MoCA", 24.0, CompareOp::LE, "impaired"}};
  return Cohort(people, series, cfg);
}

}  // namespace

TEST_CASE("well-formed directory round-trips") {
  testing::TempDir dir("cohort");
  const auto c = three_person_cohort();
  write_cohort(c, dir.path());
  const auto back = load_cohort(dir.path());
  CHECK(back.size() == 3);
  CHECK(back == c);
}

TEST_CASE("missing participants table") {
  testing::TempDir dir("cohort");
  write_cohort(three_person_cohort(), dir.path());
  std::filesystem::remove(dir.path() / "participants.csv");
  CHECK_THROWS_WITH_AS(load_cohort(dir.path()), doctest::Contains("missing participants table"), ValidationError);
}

TEST_CASE("NaN cell is reported with file and position") {
  testing::TempDir dir("cohort");
  write_cohort(three_person_cohort(), dir.path());
  const auto file = dir.path() / "features" / "B" / "rPPG.csv";
  io::write_file_atomic(file, "c0\n70\nnan\n72\n");
  try {
    (void)load_cohort(dir.path());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(file.string()) != std::string::npos);
    CHECK(msg.find("row 3 column 1") != std::string::npos);
  }
}

TEST_CASE("duplicate participant ids are rejected") {
  auto people = three_person_cohort().participants();
  people[1].id = "A";
  CHECK_THROWS_AS(Cohort(people, {}, CohortConfig{}), ValidationError);
}

TEST_CASE("dichotomize boundaries") {
  const TaskSpec moca{"MoCA", 24.0, CompareOp::LE, ""};
  const TaskSpec lsns{"LSNS", 12.0, CompareOp::LE, ""};
  const TaskSpec neg{"NegativeAffect", 44.10, CompareOp::LT, ""};
  const TaskSpec cdr{"CDR", 0.5, CompareOp::EqHalf, ""};
  CHECK(dichotomize(24.0, moca));
  CHECK_FALSE(dichotomize(12.0001, lsns));
  CHECK(dichotomize(12.0, lsns));
  CHECK_FALSE(dichotomize(44.10, neg));
  CHECK(dichotomize(44.09, neg));
  CHECK(dichotomize(0.5, cdr));
  CHECK_FALSE(dichotomize(0.0, cdr));
}

TEST_CASE("missing score gives no label") {
  auto p = person("A", 80, Sex::F, 16, Diagnosis::NC, 27);
  const TaskSpec lsns{"LSNS", 12.0, CompareOp::LE, ""};
  CHECK_FALSE(label_for(p, lsns).has_value());
  p.scores["LSNS"] = 10;
  CHECK(label_for(p, lsns) == std::optional<bool>(true));
}

TEST_CASE("demographic encoder: two-category sex block") {
  const auto f = person("A", 80, Sex::F, 16, Diagnosis::NC, 27);
  const auto m = person("B", 80, Sex::M, 16, Diagnosis::NC, 27);
  const std::vector<const ParticipantRecord*> train = {&f, &m};
  const DemographicEncoder enc(train);
  REQUIRE(enc.sex_levels().size() == 2);
  const auto z = enc.encode(f);
  // one-hot (1, 0) against column means 0.5 and population sd 0.5
  CHECK(z[0] == doctest::Approx(1.0));
  CHECK(z[1] == doctest::Approx(-1.0));
}

TEST_CASE("demographic encoder: unseen age is the z-scored zero block") {
  const auto a = person("A", 79, Sex::F, 16, Diagnosis::NC, 27);
  const auto b = person("B", 81, Sex::F, 16, Diagnosis::NC, 27);
  const auto c = person("C", 85, Sex::F, 16, Diagnosis::NC, 27);
  const std::vector<const ParticipantRecord*> train = {&a, &b, &c};
  const DemographicEncoder enc(train);
  REQUIRE(enc.age_levels().size() == 3);
  const auto z = enc.encode(person("T", 80, Sex::F, 16, Diagnosis::NC, 27));
  const std::size_t off = enc.sex_levels().size();
  const double expected = (0.0 - 1.0 / 3.0) / std::sqrt(2.0 / 9.0);
  for (std::size_t k = 0; k < 3; ++k) CHECK(z[off + k] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("demographic encoder: single training participant stays finite") {
  const auto a = person("A", 79, Sex::F, 16, Diagnosis::NC, 27);
  const std::vector<const ParticipantRecord*> train = {&a};
  const DemographicEncoder enc(train);
  for (double v : enc.encode(person("T", 90, Sex::M, 12, Diagnosis::MCI, 20))) CHECK(std::isfinite(v));
  for (double v : enc.encode(a)) CHECK(v == 0.0);
}

TEST_CASE("sensitive attribute binning") {
  SensitiveAttributeSpec yoe{SensitiveAttribute::YoeGroup};
  SensitiveAttributeSpec age{SensitiveAttribute::AgeGroup};
  SensitiveAttributeSpec dx{SensitiveAttribute::Diagnosis};
  auto p = person("A", 78.9, Sex::F, 16, Diagnosis::NC, 27);
  CHECK(bin_sensitive(p, yoe) == "College graduate");
  CHECK(bin_sensitive(p, age) == "age<=78.9");
  CHECK(bin_sensitive(p, dx) == "NC");
  p.age = 79.0;
  p.years_education = 12;
  CHECK(bin_sensitive(p, age) == "age>78.9");
  CHECK(bin_sensitive(p, yoe) == "Below college");
  p.years_education = 17;
  CHECK(bin_sensitive(p, yoe) == "Graduate+");
}

TEST_CASE("cohort config JSON round-trips") {
  CohortConfig cfg;
  cfg.tasks = default_tasks();
  cfg.age_threshold = 80.5;
  cfg.sample_rates[FeatureSet::rPPG] = 30.0;
  CHECK(parse_cohort_config(cohort_config_to_json(cfg)) == cfg);
}
