#pragma once

// Small helpers for the flat key/value and tab-delimited text files used by
// manifests, configs, logs and results.

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace maskdg {

// Shortest representation that parses back to the same double.
std::string format_real(double v);
std::string format_int(long long v);
// Fixed-point with `digits` decimals, e.g. format_fixed(83.46, 1) == "83.5".
std::string format_fixed(double v, int digits);

double parse_real(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

// "key = value" lines; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> parse_key_values(std::string_view text, std::string_view source);
std::string render_key_values(const std::vector<std::pair<std::string, std::string>>& fields);

std::string read_text_file(const std::string& path);
// Writes via a temporary file and rename so readers never see partial files.
void write_text_file(const std::string& path, std::string_view contents);

}  // namespace maskdg
