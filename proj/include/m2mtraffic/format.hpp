#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace m2mtraffic {

// Fixed-point rendering with exactly `decimals` fractional digits.
inline std::string fixed(double value, int decimals) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  if (n < 0 || n >= static_cast<int>(sizeof buf)) throw std::range_error("value too large to format");
  return std::string(buf, static_cast<std::size_t>(n));
}

// Shortest decimal text that parses back to the same double.
inline std::string shortest(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw std::range_error("value too large to format");
  return std::string(buf, end);
}

// Escapes backslash and LF so a multi-line text fits on one log line.
inline std::string escape_lines(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 8);
  for (char c : text) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

inline std::string unescape_lines(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size()) {
      ++i;
      out += text[i] == 'n' ? '\n' : text[i];
    } else {
      out += text[i];
    }
  }
  return out;
}

}  // namespace m2mtraffic
