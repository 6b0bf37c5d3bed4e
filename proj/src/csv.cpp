#include "aqnet/csv.hpp"

#include <charconv>
#include <cmath>

#include "aqnet/common.hpp"

namespace aqnet::csv {

namespace {

template <typename T>
std::string format_impl(T v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

template <typename T>
T parse_impl(std::string_view field, std::size_t line_no, std::string_view column) {
    T v{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw SchemaError("line " + std::to_string(line_no) + ", column '" + std::string(column) +
                          "': cannot parse '" + std::string(field) + "'");
    }
    return v;
}

}  // namespace

std::string format(double v) { return format_impl(v); }
std::string format(float v) { return format_impl(v); }

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

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

void expect_header(std::string_view line, std::span<const std::string_view> expected,
                   std::string_view what) {
    const auto cols = split(line);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i >= cols.size()) {
            throw SchemaError(std::string(what) + ": missing column " + std::to_string(i + 1) + " '" +
                              std::string(expected[i]) + "'");
        }
        if (cols[i] != expected[i]) {
            throw SchemaError(std::string(what) + ": column " + std::to_string(i + 1) + " expected '" +
                              std::string(expected[i]) + "', found '" + std::string(cols[i]) + "'");
        }
    }
    if (cols.size() > expected.size()) {
        throw SchemaError(std::string(what) + ": unexpected column " + std::to_string(expected.size() + 1) +
                          " '" + std::string(cols[expected.size()]) + "'");
    }
}

double parse_double(std::string_view field, std::size_t line_no, std::string_view column) {
    return parse_impl<double>(field, line_no, column);
}

float parse_float(std::string_view field, std::size_t line_no, std::string_view column) {
    return parse_impl<float>(field, line_no, column);
}

long long parse_int(std::string_view field, std::size_t line_no, std::string_view column) {
    return parse_impl<long long>(field, line_no, column);
}

}  // namespace aqnet::csv
