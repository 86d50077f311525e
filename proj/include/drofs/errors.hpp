#pragma once

#include <stdexcept>
#include <string>

namespace drofs {

// Error taxonomy used across the library. The CLI maps these onto distinct
// exit codes, so keep the hierarchy flat and throw the most specific one.

// Invalid or inconsistent configuration (bad flag value, malformed config file).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input data (CSV schema, ragged rows, bad cells).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during computation (non-finite loss, singular system).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace drofs
