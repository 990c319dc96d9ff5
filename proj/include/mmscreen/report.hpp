#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmscreen/evaluation.hpp"

namespace mmscreen {

inline constexpr std::string_view kVersion = "0.1.0";

// Batch run description, read from a JSON file. Unset fields keep the
// EvalConfig defaults; command-line flags override the file.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path out;
  std::vector<std::string> tasks;  // empty: every task of the dataset
  std::vector<Pipeline> pipelines = {Pipeline::LRGBDT, Pipeline::SVM, Pipeline::RF};
  std::vector<FusionRule> rules = {FusionRule::Majority, FusionRule::AverageProb, FusionRule::Selective};
  std::vector<std::string> groups;  // empty: All, A+L+D, F+C+D
  std::size_t runs = 100;
  std::uint64_t seed_base = 42;
  std::size_t threads = 0;
  std::size_t permutations = 128;
  std::vector<SensitiveAttribute> attributes = {SensitiveAttribute::Sex, SensitiveAttribute::AgeGroup,
                                                SensitiveAttribute::YoeGroup, SensitiveAttribute::Diagnosis};
  bool mitigate = true;
  bool keep_predictions = true;
};

// Relative dataset / out paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});

// Canonical JSON of everything that affects results. Paths, thread count
// and output switches are left out.
std::string run_config_canonical_json(const RunConfig& config);

EvalConfig to_eval_config(const RunConfig& config);

std::string results_csv(const std::vector<TaskResult>& results);
std::string predictions_csv(const std::vector<TaskResult>& results);
// One block per task, modalities by descending mean share.
std::string shares_csv(const std::vector<TaskResult>& results);
std::string fairness_csv(const std::vector<TaskResult>& results, std::string_view phase);

std::string manifest_json(std::string_view command, const RunConfig& config, const std::vector<TaskResult>& results,
                          const std::vector<std::string>& files);

}  // namespace mmscreen
