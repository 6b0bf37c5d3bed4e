#pragma once

#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aqnet::csv {

/// Shortest representation that round-trips exactly.
std::string format(double v);
std::string format(float v);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Reads one line, stripping a trailing '\r'. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

/// Throws SchemaError naming the first mismatching column.
void expect_header(std::string_view line, std::span<const std::string_view> expected,
                   std::string_view what);

/// Field parsers; errors name the line and column.
double parse_double(std::string_view field, std::size_t line_no, std::string_view column);
float parse_float(std::string_view field, std::size_t line_no, std::string_view column);
long long parse_int(std::string_view field, std::size_t line_no, std::string_view column);

}  // namespace aqnet::csv
