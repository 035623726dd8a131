#pragma once

// Number formatting and parsing shared by the CSV readers and writers.
// Doubles are written in their shortest round-trip form so that
// parse(write(x)) == x bit for bit.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cellsense::text {

std::vector<std::string_view> split(std::string_view line, char sep);

// Drops a trailing '\r' left by CRLF files.
std::string_view chomp(std::string_view line);

std::optional<std::int64_t> parse_int(std::string_view s);
std::optional<std::uint64_t> parse_uint(std::string_view s);
// Accepts plain decimal or scientific notation; rejects inf/nan.
std::optional<double> parse_double(std::string_view s);

std::string format_double(double v);
// Fixed notation, shortest round-trip digits, padded to min_frac fractional digits.
std::string format_fixed(double v, int min_frac);
// Exactly `digits` fractional digits (printf %.*f); "nan" for NaN.
std::string format_rounded(double v, int digits);

}  // namespace cellsense::text
