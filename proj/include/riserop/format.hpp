#pragma once

// Number formatting and parsing shared by the text file formats.

#include "riserop/error.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace riserop {

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view text, const char* what) {
    const std::string s(trim(text));
    if (s.empty()) throw DataError(std::string("empty value for ") + what);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    // ERANGE also flags subnormals, which %.17g writes and must read back; only overflow is an error
    if (end != s.c_str() + s.size() || (errno == ERANGE && std::isinf(v)))
        throw DataError(std::string("non-numeric value '") + s + "' for " + what);
    return v;
}

inline long parse_long(std::string_view text, const char* what) {
    const std::string s(trim(text));
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
        throw DataError(std::string("non-integer value '") + s + "' for " + what);
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << contents;
    if (!os) throw IoError("failed writing '" + path + "'");
}

} // namespace riserop
