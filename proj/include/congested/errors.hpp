#pragma once

#include <stdexcept>
#include <string>

namespace congested {

/// Raised when a problem would exceed a configured size limit (state count,
/// DP table cells, enumerated paths).
class capacity_error : public std::length_error {
 public:
  explicit capacity_error(const std::string& what) : std::length_error(what) {}
};

/// Raised for malformed or schema-violating experiment configuration.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when reading inputs or writing outputs fails.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace congested
