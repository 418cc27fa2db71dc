#pragma once

#include <string>

namespace voltmargin {

/// Shortest decimal text that parses back to the same double ("nan", "inf" for non-finite values).
std::string format_double(double value);

/// Parses a complete decimal number; throws InvalidArgument on trailing garbage.
double parse_double(const std::string& text);

}  // namespace voltmargin
