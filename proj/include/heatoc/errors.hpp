#pragma once

#include <stdexcept>
#include <string>

namespace heatoc {

/// Invalid user input: malformed configuration, bad problem data.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical step failed in a way the mathematics says it cannot
/// (singular definite system, non-finite result).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Peer coefficient file was requested but is absent or still a placeholder.
class MissingCoefficientsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace heatoc
