#pragma once

#include <string>
#include <vector>

namespace gaitbridge {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::string join(const std::vector<std::string>& parts, char sep = ',');

}  // namespace gaitbridge
