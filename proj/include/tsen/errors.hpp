#pragma once

#include <stdexcept>
#include <string>

namespace tsen {

// Error classes map 1:1 onto CLI exit codes (see tools/tsen_main.cpp):
// config = 2, data = 3, numeric = 4, io = 5.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tsen
