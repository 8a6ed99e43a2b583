#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gaitbridge {

/// Input with the wrong shape or out of its declared domain.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration that failed validation. Carries every problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> items);
  explicit ConfigError(const std::string& item) : ConfigError(std::vector<std::string>{item}) {}
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::vector<std::string> items_;
};

/// Malformed file contents.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint written by an incompatible format version.
class VersionMismatch : public std::runtime_error {
 public:
  VersionMismatch(unsigned found, unsigned expected);
  unsigned found() const { return found_; }
  unsigned expected() const { return expected_; }

 private:
  unsigned found_;
  unsigned expected_;
};

/// The physics integrator produced a non-finite state.
class SimulationDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gaitbridge
