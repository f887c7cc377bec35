#pragma once

#include <stdexcept>
#include <string>

namespace windcast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, non-finite values, length mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters or configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training or decomposition.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Wraps a failure inside one pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, int subseries, const std::string& what)
      : Error(format(stage, subseries, what)),
        stage_(std::move(stage)),
        subseries_(subseries) {}

  const std::string& stage() const noexcept { return stage_; }
  /// -1 when the stage is not tied to one subseries.
  int subseries() const noexcept { return subseries_; }

 private:
  static std::string format(const std::string& stage, int subseries,
                            const std::string& what) {
    std::string msg = "stage '" + stage + "'";
    if (subseries >= 0) msg += " (subseries " + std::to_string(subseries) + ")";
    return msg + ": " + what;
  }

  std::string stage_;
  int subseries_;
};

}  // namespace windcast
