#include "gaitbridge/error.hpp"

namespace gaitbridge {

namespace {
std::string join_items(const std::vector<std::string>& items) {
  std::string msg = "invalid configuration:";
  for (const auto& item : items) msg += "\n  - " + item;
  return msg;
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> items)
    : std::runtime_error(join_items(items)), items_(std::move(items)) {}

VersionMismatch::VersionMismatch(unsigned found, unsigned expected)
    : std::runtime_error("checkpoint format version " + std::to_string(found) +
                         " is not supported (this build reads version " + std::to_string(expected) + ")"),
      found_(found),
      expected_(expected) {}

}  // namespace gaitbridge
