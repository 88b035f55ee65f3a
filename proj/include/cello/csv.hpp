#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cello::csv {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Splits on commas; fields are trimmed of surrounding whitespace.
std::vector<std::string_view> split(std::string_view line);

/// Parses a whole field as a double; returns false on trailing garbage.
bool parse_double(std::string_view field, double& out);

}  // namespace cello::csv
