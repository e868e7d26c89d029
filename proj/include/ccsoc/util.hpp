#pragma once

#include <charconv>
#include <string>

namespace ccsoc {

/// Shortest round-trip decimal form, locale independent. All CSV output
/// goes through this so identical runs produce byte-identical files.
inline std::string format_double(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

} // namespace ccsoc
