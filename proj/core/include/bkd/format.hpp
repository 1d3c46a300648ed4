#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace bkd {

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

/// Strict parse: the whole of `s` must be a valid number. Throws std::invalid_argument.
double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);

std::string_view trim(std::string_view s);

}  // namespace bkd
