#pragma once

#include <stdexcept>
#include <string>

namespace geohead {

// Configuration or usage problem; the CLI maps these to exit code 1.
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Unreadable, malformed, or unusable input data; CLI exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : DataError {
  explicit IoError(const std::string& msg) : DataError(msg) {}
};

// Numeric breakdown (non-finite loss, diverged training); CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace geohead
