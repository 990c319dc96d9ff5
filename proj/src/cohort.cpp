#include "mmscreen/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "mmscreen/error.hpp"
#include "mmscreen/io.hpp"

namespace mmscreen {

namespace {

constexpr std::array<std::string_view, 8> kFeatureSetNames = {
    "EmotionAUs", "DINOv2", "rPPG", "Acoustic", "WavLM", "RoBERTaSentiment", "LLaMA", "Demographics"};

bool valid_id(std::string_view id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-' || c == '.';
  });
}

}  // namespace

std::string_view to_string(FeatureSet fs) { return kFeatureSetNames[static_cast<std::size_t>(fs)]; }

FeatureSet parse_feature_set(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureSetNames.size(); ++i) {
    if (kFeatureSetNames[i] == name) return static_cast<FeatureSet>(i);
  }
  std::string valid;
  for (auto n : kFeatureSetNames) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw ValidationError("unknown feature_set '" + std::string(name) + "' (valid: " + valid + ")");
}

bool is_temporal(FeatureSet fs) { return fs != FeatureSet::LLaMA && fs != FeatureSet::Demographics; }

std::string_view to_string(Sex s) { return s == Sex::F ? "F" : "M"; }
std::string_view to_string(Diagnosis d) { return d == Diagnosis::NC ? "NC" : "MCI"; }

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::LE: return "LE";
    case CompareOp::LT: return "LT";
    case CompareOp::EqHalf: return "EQ_HALF";
  }
  return "?";
}

CompareOp parse_compare_op(std::string_view text) {
  if (text == "LE") return CompareOp::LE;
  if (text == "LT") return CompareOp::LT;
  if (text == "EQ_HALF") return CompareOp::EqHalf;
  throw ValidationError("unknown task operator '" + std::string(text) + "' (valid: LE, LT, EQ_HALF)");
}

std::string_view to_string(SensitiveAttribute a) {
  switch (a) {
    case SensitiveAttribute::Sex: return "sex";
    case SensitiveAttribute::AgeGroup: return "age_group";
    case SensitiveAttribute::YoeGroup: return "yoe_group";
    case SensitiveAttribute::Diagnosis: return "diagnosis";
  }
  return "?";
}

SensitiveAttribute parse_sensitive_attribute(std::string_view text) {
  if (text == "sex") return SensitiveAttribute::Sex;
  if (text == "age_group") return SensitiveAttribute::AgeGroup;
  if (text == "yoe_group") return SensitiveAttribute::YoeGroup;
  if (text == "diagnosis") return SensitiveAttribute::Diagnosis;
  throw ValidationError("unknown sensitive attribute '" + std::string(text) +
                        "' (valid: sex, age_group, yoe_group, diagnosis)");
}

// --- Cohort -----------------------------------------------------------------

Cohort::Cohort(std::vector<ParticipantRecord> participants, std::vector<FeatureSeries> series,
               CohortConfig config)
    : participants_(std::move(participants)), series_(std::move(series)), config_(std::move(config)) {
  std::set<std::string> outcome_set;
  for (std::size_t i = 0; i < participants_.size(); ++i) {
    const auto& p = participants_[i];
    if (!valid_id(p.id)) throw ValidationError("invalid participant id '" + p.id + "'");
    if (!participant_index_.emplace(p.id, i).second) {
      throw ValidationError("duplicate participant id '" + p.id + "'");
    }
    if (!(p.age > 0.0) || !std::isfinite(p.age)) {
      throw ValidationError("participant '" + p.id + "': age must be positive");
    }
    if (p.years_education < 0) {
      throw ValidationError("participant '" + p.id + "': years_education must be >= 0");
    }
    for (const auto& [name, value] : p.scores) {
      if (!std::isfinite(value)) {
        throw ValidationError("participant '" + p.id + "': score '" + name + "' is not finite");
      }
      outcome_set.insert(name);
    }
  }
  outcomes_.assign(outcome_set.begin(), outcome_set.end());

  std::map<FeatureSet, std::size_t> dims;
  for (std::size_t i = 0; i < series_.size(); ++i) {
    const auto& s = series_[i];
    const std::string where = "series " + std::string(to_string(s.feature_set)) + " of '" + s.participant_id + "'";
    if (!participant_index_.contains(s.participant_id)) {
      throw ValidationError(where + " references an unknown participant");
    }
    if (s.data.rows() < 1) throw ValidationError(where + " has no time steps");
    if (s.data.cols() < 1) throw ValidationError(where + " has no channels");
    if (!is_temporal(s.feature_set) && s.data.rows() != 1) {
      throw ValidationError(where + " must have exactly one row (non-temporal feature set)");
    }
    for (std::size_t r = 0; r < s.data.rows(); ++r) {
      for (std::size_t c = 0; c < s.data.cols(); ++c) {
        if (!std::isfinite(s.data(r, c))) {
          throw ValidationError(where + " has a non-finite value at row " + std::to_string(r + 1) + ", column " +
                                std::to_string(c + 1));
        }
      }
    }
    auto [it, inserted] = dims.emplace(s.feature_set, s.data.cols());
    if (!inserted && it->second != s.data.cols()) {
      throw ValidationError(where + " has " + std::to_string(s.data.cols()) + " channels, expected " +
                            std::to_string(it->second));
    }
    if (!series_index_.emplace(std::make_pair(s.participant_id, s.feature_set), i).second) {
      throw ValidationError(where + " is duplicated");
    }
  }

  std::set<std::string> task_names;
  for (const auto& t : config_.tasks) {
    if (!task_names.insert(t.name).second) throw ValidationError("duplicate task '" + t.name + "'");
    if (!std::isfinite(t.cutoff)) throw ValidationError("task '" + t.name + "': cutoff must be finite");
    if (t.op == CompareOp::EqHalf && t.name != "CDR") {
      throw ValidationError("task '" + t.name + "': EQ_HALF is only valid for CDR");
    }
  }
}

void Cohort::set_outcome_order(std::vector<std::string> names) {
  for (const auto& n : outcomes_) {
    if (std::find(names.begin(), names.end(), n) == names.end()) {
      throw ValidationError("outcome order is missing '" + n + "'");
    }
  }
  outcomes_ = std::move(names);
}

const TaskSpec& Cohort::task(std::string_view name) const {
  for (const auto& t : config_.tasks) {
    if (t.name == name) return t;
  }
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

std::optional<std::size_t> Cohort::participant_index(std::string_view id) const {
  auto it = participant_index_.find(id);
  if (it == participant_index_.end()) return std::nullopt;
  return it->second;
}

const FeatureSeries* Cohort::find_series(std::string_view participant_id, FeatureSet fs) const {
  auto it = series_index_.find(std::make_pair(std::string(participant_id), fs));
  return it == series_index_.end() ? nullptr : &series_[it->second];
}

std::vector<FeatureSet> Cohort::feature_sets() const {
  std::vector<FeatureSet> out;
  for (auto fs : kAllFeatureSets) {
    if (channels(fs)) out.push_back(fs);
  }
  return out;
}

std::optional<std::size_t> Cohort::channels(FeatureSet fs) const {
  for (const auto& s : series_) {
    if (s.feature_set == fs) return s.data.cols();
  }
  return std::nullopt;
}

// --- configuration ----------------------------------------------------------

CohortConfig parse_cohort_config(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tasks.json: ") + e.what());
  }
  CohortConfig cfg;
  try {
    for (const auto& t : j.at("tasks")) {
      TaskSpec spec;
      spec.name = t.at("name").get<std::string>();
      spec.cutoff = t.at("cutoff").get<double>();
      spec.op = parse_compare_op(t.at("operator").get<std::string>());
      spec.positive_means = t.value("positive_means", std::string{});
      cfg.tasks.push_back(std::move(spec));
    }
    if (j.contains("sensitive")) {
      const auto& s = j.at("sensitive");
      cfg.age_threshold = s.value("age_threshold", cfg.age_threshold);
      cfg.yoe_below_college_max = s.value("yoe_below_college_max", cfg.yoe_below_college_max);
      cfg.yoe_graduate_min = s.value("yoe_graduate_min", cfg.yoe_graduate_min);
    }
    if (j.contains("sample_rates")) {
      for (const auto& [name, rate] : j.at("sample_rates").items()) {
        cfg.sample_rates[parse_feature_set(name)] = rate.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tasks.json: ") + e.what());
  }
  if (cfg.yoe_graduate_min <= cfg.yoe_below_college_max) {
    throw ValidationError("tasks.json: yoe_graduate_min must exceed yoe_below_college_max");
  }
  return cfg;
}

std::string cohort_config_to_json(const CohortConfig& config) {
  nlohmann::ordered_json j;
  j["tasks"] = nlohmann::ordered_json::array();
  for (const auto& t : config.tasks) {
    nlohmann::ordered_json tj;
    tj["name"] = t.name;
    tj["cutoff"] = t.cutoff;
    tj["operator"] = std::string(to_string(t.op));
    tj["positive_means"] = t.positive_means;
    j["tasks"].push_back(std::move(tj));
  }
  j["sensitive"]["age_threshold"] = config.age_threshold;
  j["sensitive"]["yoe_below_college_max"] = config.yoe_below_college_max;
  j["sensitive"]["yoe_graduate_min"] = config.yoe_graduate_min;
  if (!config.sample_rates.empty()) {
    for (const auto& [fs, rate] : config.sample_rates) j["sample_rates"][std::string(to_string(fs))] = rate;
  }
  return j.dump(2) + "\n";
}

// --- load / write -----------------------------------------------------------

namespace {

std::string cell_location(const std::filesystem::path& file, std::size_t row, std::size_t col) {
  return file.string() + " row " + std::to_string(row) + " column " + std::to_string(col);
}

std::vector<ParticipantRecord> load_participants(const std::filesystem::path& file,
                                                 std::vector<std::string>& outcome_order) {
  const auto lines = io::read_lines(file);
  if (lines.empty()) throw ValidationError(file.string() + ": empty participants table");
  const auto header = io::split_csv_line(lines[0]);
  const std::vector<std::string> required = {"id", "age", "sex", "years_education", "diagnosis"};
  if (header.size() < required.size() || !std::equal(required.begin(), required.end(), header.begin())) {
    throw ValidationError(file.string() + ": header must start with id,age,sex,years_education,diagnosis");
  }
  outcome_order.assign(header.begin() + static_cast<std::ptrdiff_t>(required.size()), header.end());

  std::vector<ParticipantRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = io::split_csv_line(lines[li]);
    const std::size_t row = li + 1;
    if (cells.size() != header.size()) {
      throw ValidationError(file.string() + " row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    ParticipantRecord rec;
    rec.id = cells[0];
    auto age = io::parse_double(cells[1]);
    if (!age) throw ValidationError("malformed numeric cell at " + cell_location(file, row, 2));
    rec.age = *age;
    if (cells[2] == "F") {
      rec.sex = Sex::F;
    } else if (cells[2] == "M") {
      rec.sex = Sex::M;
    } else {
      throw ValidationError("invalid sex '" + cells[2] + "' at " + cell_location(file, row, 3) + " (valid: F, M)");
    }
    auto yoe = io::parse_int(cells[3]);
    if (!yoe) throw ValidationError("malformed integer cell at " + cell_location(file, row, 4));
    rec.years_education = static_cast<int>(*yoe);
    if (cells[4] == "NC") {
      rec.diagnosis = Diagnosis::NC;
    } else if (cells[4] == "MCI") {
      rec.diagnosis = Diagnosis::MCI;
    } else {
      throw ValidationError("invalid diagnosis '" + cells[4] + "' at " + cell_location(file, row, 5) +
                            " (valid: NC, MCI)");
    }
    for (std::size_t c = required.size(); c < cells.size(); ++c) {
      if (cells[c].empty()) continue;
      auto v = io::parse_double(cells[c]);
      if (!v) throw ValidationError("malformed numeric cell at " + cell_location(file, row, c + 1));
      if (!std::isfinite(*v)) throw ValidationError("non-finite score at " + cell_location(file, row, c + 1));
      rec.scores[header[c]] = *v;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

FeatureSeries load_series(const std::filesystem::path& file, const std::string& participant_id, FeatureSet fs) {
  const auto lines = io::read_lines(file);
  if (lines.empty()) throw ValidationError(file.string() + ": missing header row");
  FeatureSeries s;
  s.participant_id = participant_id;
  s.feature_set = fs;
  s.channel_names = io::split_csv_line(lines[0]);
  const std::size_t d = s.channel_names.size();
  std::vector<double> values;
  std::size_t rows = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = io::split_csv_line(lines[li]);
    const std::size_t row = li + 1;
    if (cells.size() != d) {
      throw ValidationError(file.string() + " row " + std::to_string(row) + ": expected " + std::to_string(d) +
                            " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < d; ++c) {
      auto v = io::parse_double(cells[c]);
      if (!v) throw ValidationError("malformed numeric cell at " + cell_location(file, row, c + 1));
      if (std::isnan(*v)) throw ValidationError("NaN value at " + cell_location(file, row, c + 1));
      if (!std::isfinite(*v)) throw ValidationError("non-finite value at " + cell_location(file, row, c + 1));
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) throw ValidationError(file.string() + ": no data rows");
  s.data = Matrix(rows, d, std::move(values));
  return s;
}

}  // namespace

Cohort load_cohort(const std::filesystem::path& root) {
  const auto participants_file = root / "participants.csv";
  if (!std::filesystem::is_regular_file(participants_file)) {
    throw ValidationError("missing participants table: " + participants_file.string());
  }
  std::vector<std::string> outcome_order;
  auto participants = load_participants(participants_file, outcome_order);

  const auto config_file = root / "tasks.json";
  if (!std::filesystem::is_regular_file(config_file)) {
    throw ValidationError("missing task configuration: " + config_file.string());
  }
  auto config = parse_cohort_config(io::read_text_file(config_file));
  for (const auto& t : config.tasks) {
    if (std::find(outcome_order.begin(), outcome_order.end(), t.name) == outcome_order.end()) {
      throw ValidationError("task '" + t.name + "' has no score column in participants.csv");
    }
  }

  std::vector<FeatureSeries> series;
  const auto features_dir = root / "features";
  if (std::filesystem::is_directory(features_dir)) {
    std::vector<std::filesystem::path> participant_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(features_dir)) {
      if (entry.is_directory()) participant_dirs.push_back(entry.path());
    }
    std::sort(participant_dirs.begin(), participant_dirs.end());
    for (const auto& dir : participant_dirs) {
      const std::string pid = dir.filename().string();
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const FeatureSet fs = parse_feature_set(f.stem().string());
        auto s = load_series(f, pid, fs);
        if (auto it = config.sample_rates.find(fs); it != config.sample_rates.end()) s.sample_rate_hint = it->second;
        series.push_back(std::move(s));
      }
    }
  }
  // Canonical order: participants.csv order, then feature-set order.
  std::map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < participants.size(); ++i) order.emplace(participants[i].id, i);
  std::stable_sort(series.begin(), series.end(), [&](const FeatureSeries& a, const FeatureSeries& b) {
    auto ia = order.find(a.participant_id);
    auto ib = order.find(b.participant_id);
    const std::size_t ka = ia == order.end() ? participants.size() : ia->second;
    const std::size_t kb = ib == order.end() ? participants.size() : ib->second;
    if (ka != kb) return ka < kb;
    return a.feature_set < b.feature_set;
  });

  Cohort cohort(std::move(participants), std::move(series), std::move(config));
  cohort.set_outcome_order(std::move(outcome_order));
  return cohort;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  std::string text;
  std::vector<std::string> header = {"id", "age", "sex", "years_education", "diagnosis"};
  for (const auto& o : cohort.outcome_names()) header.push_back(o);
  text += io::join_csv_line(header) + "\n";
  for (const auto& p : cohort.participants()) {
    std::vector<std::string> cells = {p.id, io::format_double(p.age), std::string(to_string(p.sex)),
                                      std::to_string(p.years_education), std::string(to_string(p.diagnosis))};
    for (const auto& o : cohort.outcome_names()) {
      auto it = p.scores.find(o);
      cells.push_back(it == p.scores.end() ? std::string{} : io::format_double(it->second));
    }
    text += io::join_csv_line(cells) + "\n";
  }
  io::write_file_atomic(root / "participants.csv", text);
  io::write_file_atomic(root / "tasks.json", cohort_config_to_json(cohort.config()));

  for (const auto& s : cohort.series()) {
    std::string body = io::join_csv_line(s.channel_names) + "\n";
    std::vector<std::string> cells(s.data.cols());
    for (std::size_t r = 0; r < s.data.rows(); ++r) {
      for (std::size_t c = 0; c < s.data.cols(); ++c) cells[c] = io::format_double(s.data(r, c));
      body += io::join_csv_line(cells);
      body += '\n';
    }
    io::write_file_atomic(root / "features" / s.participant_id / (std::string(to_string(s.feature_set)) + ".csv"),
                          body);
  }
}

// --- labels and groups ------------------------------------------------------

bool dichotomize(double score, const TaskSpec& spec) {
  switch (spec.op) {
    case CompareOp::LE: return score <= spec.cutoff;
    case CompareOp::LT: return score < spec.cutoff;
    case CompareOp::EqHalf: return score == 0.5;
  }
  return false;
}

std::optional<bool> label_for(const ParticipantRecord& record, const TaskSpec& spec) {
  auto it = record.scores.find(spec.name);
  if (it == record.scores.end()) return std::nullopt;
  return dichotomize(it->second, spec);
}

double median_score(const Cohort& cohort, std::string_view outcome) {
  std::vector<double> values;
  for (const auto& p : cohort.participants()) {
    auto it = p.scores.find(std::string(outcome));
    if (it != p.scores.end()) values.push_back(it->second);
  }
  if (values.empty()) throw ValidationError("no scores for outcome '" + std::string(outcome) + "'");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<TaskSpec> default_tasks() {
  return {
      {"CDR", 0.5, CompareOp::EqHalf, "CDR = 0.5 (questionable dementia)"},
      {"MoCA", 24.0, CompareOp::LE, "MoCA <= 24"},
      {"LSNS", 12.0, CompareOp::LE, "LSNS-6 <= 12 (social isolation)"},
      {"Neuroticism", 16.0, CompareOp::LT, "Neuroticism < 16"},
      {"NegativeAffect", 44.10, CompareOp::LT, "Negative affect < 44.10"},
      {"SocialSatisfaction", 48.66, CompareOp::LT, "Social satisfaction < 48.66"},
      {"PsychologicalWellbeing", 53.70, CompareOp::LT, "Psychological well-being < 53.70"},
  };
}

std::string bin_sensitive(const ParticipantRecord& record, const SensitiveAttributeSpec& spec) {
  switch (spec.attribute) {
    case SensitiveAttribute::Sex: return std::string(to_string(record.sex));
    case SensitiveAttribute::AgeGroup: {
      const std::string t = io::format_double(spec.age_threshold);
      return record.age <= spec.age_threshold ? "age<=" + t : "age>" + t;
    }
    case SensitiveAttribute::YoeGroup:
      if (record.years_education <= spec.yoe_below_college_max) return "Below college";
      if (record.years_education >= spec.yoe_graduate_min) return "Graduate+";
      return "College graduate";
    case SensitiveAttribute::Diagnosis: return std::string(to_string(record.diagnosis));
  }
  return {};
}

// --- demographics -----------------------------------------------------------

DemographicEncoder::DemographicEncoder(std::span<const ParticipantRecord* const> train) {
  if (train.empty()) throw RuntimeError("encode_demographics: empty training set");
  std::set<Sex> sexes;
  std::set<double> ages;
  std::set<int> yoes;
  for (const auto* r : train) {
    sexes.insert(r->sex);
    ages.insert(r->age);
    yoes.insert(r->years_education);
  }
  sexes_.assign(sexes.begin(), sexes.end());
  ages_.assign(ages.begin(), ages.end());
  yoes_.assign(yoes.begin(), yoes.end());

  const std::size_t d = sexes_.size() + ages_.size() + yoes_.size();
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  std::vector<std::vector<double>> rows;
  rows.reserve(train.size());
  for (const auto* r : train) rows.push_back(one_hot(*r));
  const double n = static_cast<double>(train.size());
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < d; ++c) mean_[c] += row[c];
  }
  for (auto& m : mean_) m /= n;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < d; ++c) scale_[c] += (row[c] - mean_[c]) * (row[c] - mean_[c]);
  }
  for (auto& s : scale_) {
    s = std::sqrt(s / n);
    if (s == 0.0) s = 1.0;
  }
}

std::vector<double> DemographicEncoder::one_hot(const ParticipantRecord& record) const {
  std::vector<double> v(sexes_.size() + ages_.size() + yoes_.size(), 0.0);
  std::size_t offset = 0;
  if (auto it = std::find(sexes_.begin(), sexes_.end(), record.sex); it != sexes_.end()) {
    v[offset + static_cast<std::size_t>(it - sexes_.begin())] = 1.0;
  }
  offset += sexes_.size();
  if (auto it = std::find(ages_.begin(), ages_.end(), record.age); it != ages_.end()) {
    v[offset + static_cast<std::size_t>(it - ages_.begin())] = 1.0;
  }
  offset += ages_.size();
  if (auto it = std::find(yoes_.begin(), yoes_.end(), record.years_education); it != yoes_.end()) {
    v[offset + static_cast<std::size_t>(it - yoes_.begin())] = 1.0;
  }
  return v;
}

std::vector<double> DemographicEncoder::encode(const ParticipantRecord& record) const {
  auto v = one_hot(record);
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = (v[c] - mean_[c]) / scale_[c];
  return v;
}

std::vector<double> encode_demographics(std::span<const ParticipantRecord> train_records,
                                        const ParticipantRecord& record) {
  std::vector<const ParticipantRecord*> ptrs;
  ptrs.reserve(train_records.size());
  for (const auto& r : train_records) ptrs.push_back(&r);
  return DemographicEncoder(ptrs).encode(record);
}

}  // namespace mmscreen
