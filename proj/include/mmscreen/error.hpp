#pragma once

#include <stdexcept>
#include <string>

namespace mmscreen {

// Input that fails a documented invariant: bad dataset layout, malformed
// cells, bad configuration. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while computing (degenerate folds, numerical breakdown, I/O).
// Maps to CLI exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A training split with a single class. Callers in the evaluation harness
// catch this and count the fold as skipped.
class DegenerateFoldError : public RuntimeError {
 public:
  DegenerateFoldError() : RuntimeError("degenerate fold: training labels contain a single class") {}
  explicit DegenerateFoldError(const std::string& what) : RuntimeError(what) {}
};

// Fewer than two non-empty groups for a sensitive attribute.
class FairnessUndefinedError : public RuntimeError {
 public:
  explicit FairnessUndefinedError(const std::string& detail)
      : RuntimeError("fairness undefined: " + detail) {}
};

}  // namespace mmscreen
