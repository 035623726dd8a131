#include "text.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <system_error>

namespace cellsense::text {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view chomp(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

namespace {

template <typename T>
std::optional<T> parse_integral(std::string_view s) {
  if (s.empty()) return std::nullopt;
  T value{};
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return value;
}

}  // namespace

std::optional<std::int64_t> parse_int(std::string_view s) {
  return parse_integral<std::int64_t>(s);
}

std::optional<std::uint64_t> parse_uint(std::string_view s) {
  if (!s.empty() && s.front() == '-') return std::nullopt;
  return parse_integral<std::uint64_t>(s);
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string format_fixed(double v, int min_frac) {
  std::array<char, 512> buf{};
  auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
  std::string out(buf.data(), ptr);
  const std::size_t dot = out.find('.');
  int frac = 0;
  if (dot == std::string::npos) {
    out.push_back('.');
  } else {
    frac = static_cast<int>(out.size() - dot - 1);
  }
  if (frac < min_frac) out.append(static_cast<std::size_t>(min_frac - frac), '0');
  return out;
}

std::string format_rounded(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[400];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace cellsense::text
