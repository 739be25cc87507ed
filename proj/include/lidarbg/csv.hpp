#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lidarbg::csv {

/// Splits on commas. No quoting: none of our formats carry commas in fields.
std::vector<std::string_view> split(std::string_view line);

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view field);
std::optional<std::int64_t> parse_int(std::string_view field);
std::optional<std::uint64_t> parse_uint(std::string_view field);

std::string_view trim(std::string_view s);

}  // namespace lidarbg::csv
