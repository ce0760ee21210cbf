#ifndef MSVAE_TEXT_HPP_
#define MSVAE_TEXT_HPP_

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace msvae {

/// Shortest round-trip decimal form; locale independent.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Parses the whole of `text` as a double with '.' as the decimal separator.
inline std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' ||
                           text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return v;
}

}  // namespace msvae

#endif  // MSVAE_TEXT_HPP_
