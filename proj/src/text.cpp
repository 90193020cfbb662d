#include "indrnn/text.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

#include "indrnn/types.hpp"

namespace indrnn {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;  // 32 chars always suffice for shortest form
  return std::string(buf, end);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

namespace {

[[noreturn]] void bad_value(std::string_view what, std::string_view s,
                            const char* expected) {
  throw ConfigError(std::string(what) + ": expected " + expected + ", got \"" +
                    std::string(s) + "\"");
}

}  // namespace

double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;  // from_chars rejects a leading +
  auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || end != last || s.empty()) bad_value(what, s, "a number");
  return v;
}

std::int64_t parse_int(std::string_view s, std::string_view what) {
  s = trim(s);
  std::int64_t v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;
  auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || end != last || s.empty()) bad_value(what, s, "an integer");
  return v;
}

bool parse_bool(std::string_view s, std::string_view what) {
  s = trim(s);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(what, s, "true or false");
}

}  // namespace indrnn
