#pragma once

#include <stdexcept>
#include <string>

namespace cotflow {

// Invalid user input: bad config values, shape mismatches, malformed files.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime numerical failure: overflow, divergence, non-convergence.
// `diagnostic` is a JSON object string with machine-readable context.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string diagnostic_json)
      : std::runtime_error(what), diagnostic(std::move(diagnostic_json)) {}
  explicit NumericalError(const std::string& what)
      : NumericalError(what, "{}") {}

  std::string diagnostic;
};

}  // namespace cotflow
