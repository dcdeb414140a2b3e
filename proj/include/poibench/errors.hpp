#pragma once

#include <stdexcept>
#include <string>

namespace poibench {

// Process exit codes used by the CLI: 0 success, 2 config, 3 data, 4 numeric.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

/// Invalid or inconsistent configuration (schema violations, unknown keys).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Unusable input data (unreadable files, malformed records, empty results).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure during training (divergence, singular systems, ELBO decrease).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace poibench
