#pragma once

// Small text helpers shared by the CSV/JSON interchange formats.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qcube::text {

/// Splits on commas. Fields are trimmed of surrounding spaces and a trailing
/// '\r'. Quoting is not supported; none of the formats need it.
std::vector<std::string_view> split_csv(std::string_view line);

std::optional<double> to_double(std::string_view token);
std::optional<std::int64_t> to_int(std::string_view token);

/// Shortest representation that parses back to the identical double.
std::string format_double(double value);

/// Fixed-point with the given number of decimals (for human-facing reports).
std::string format_fixed(double value, int decimals);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// key=value lines; '#' starts a comment; blank lines skipped.
std::map<std::string, std::string> parse_key_values(std::string_view content);

std::vector<std::string_view> lines(std::string_view content);

}  // namespace qcube::text
