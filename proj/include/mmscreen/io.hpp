#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmscreen::io {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

// Strict parse of a whole cell as a 64-bit float; nullopt on any trailing
// garbage or empty input. Accepts "nan"/"inf" so callers can report them.
std::optional<double> parse_double(std::string_view text);

std::optional<long long> parse_int(std::string_view text);

// Splits one CSV line on commas. Fields may be double-quoted; a doubled
// quote inside a quoted field is a literal quote.
std::vector<std::string> split_csv_line(std::string_view line);

std::string join_csv_line(const std::vector<std::string>& fields);

std::string read_text_file(const std::filesystem::path& path);

// Reads a file as lines, stripping a trailing '\r' and a leading UTF-8 BOM.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Collects output files and publishes them together: every file is first
// written to a temp sibling; commit() renames them all, and destruction
// without commit() removes the temps.
class StagedOutputs {
 public:
  StagedOutputs() = default;
  StagedOutputs(const StagedOutputs&) = delete;
  StagedOutputs& operator=(const StagedOutputs&) = delete;
  ~StagedOutputs();

  void stage(const std::filesystem::path& path, std::string_view contents);
  void commit();

 private:
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;
  bool committed_ = false;
};

// 64-bit FNV-1a, stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace mmscreen::io
