#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tofspec {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed time-tag or table file. `record_index` names the first
/// offending record (or the record boundary where a truncation occurred).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t record_index)
      : Error(what), record_index_(record_index) {}
  std::size_t record_index() const noexcept { return record_index_; }

 private:
  std::size_t record_index_;
};

/// A calibration step could not produce a result (no peak, rank-deficient
/// design, disjoint supports, ...).
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Iterative fit did not converge. `best_so_far` holds the parameter vector
/// at the last accepted step, valid only for diagnostics.
class FitError : public Error {
 public:
  FitError(const std::string& what, std::vector<double> best_so_far)
      : Error(what), best_so_far_(std::move(best_so_far)) {}
  const std::vector<double>& best_so_far() const noexcept { return best_so_far_; }

 private:
  std::vector<double> best_so_far_;
};

/// Analysis precondition violated by the data (e.g. multimodal line shape).
class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace tofspec
