#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace indrnn {

// Shortest decimal string that round-trips to the same double ("inf", "-inf"
// and "nan" spelled literally).
std::string format_double(double v);

std::string_view trim(std::string_view s);

// All parsers require the whole (trimmed) string to be consumed and throw
// ConfigError naming `what` otherwise. parse_double accepts inf/nan spellings.
double parse_double(std::string_view s, std::string_view what);
std::int64_t parse_int(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);  // "true" / "false"

}  // namespace indrnn
