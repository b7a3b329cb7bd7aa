#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace imgconf {

// %.17g: round-trips every double through text.
std::string format_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);
std::string trim(const std::string& s);

// Strict numeric parsing: the whole token must be consumed.
double parse_double(const std::string& s);
long long parse_int(const std::string& s);
std::uint64_t parse_uint64(const std::string& s);

}  // namespace imgconf
