#pragma once

#include <stdexcept>
#include <string>

namespace evi {

// Invalid or inconsistent run configuration. CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during a run (weight blow-up, non-finite values).
// CLI maps this to exit code 2.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required spectral condition on the feature second-moment matrix does
// not hold (singular moment matrix, inadmissible step size or decay rate).
// CLI maps this to exit code 2 unless the config waives the check.
class AssumptionError : public std::runtime_error {
 public:
  explicit AssumptionError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace evi
