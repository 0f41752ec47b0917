#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>

namespace aq {

// Closed time interval in seconds. The ingestion layer keeps spans on a 1 ms
// grid so midpoint arithmetic and tie-breaks compare exactly.
struct TimeSpan {
    double start = 0.0;
    double end = 0.0;

    double length() const { return end - start; }
    double midpoint() const { return (start + end) / 2.0; }

    // Closed-interval overlap; a shared endpoint counts.
    bool overlaps(const TimeSpan& other) const {
        return start <= other.end && other.start <= end;
    }

    bool valid() const {
        return std::isfinite(start) && std::isfinite(end) && start >= 0.0 && start <= end;
    }

    bool operator==(const TimeSpan&) const = default;
};

// Span ordering used wherever records are sorted: (start, end).
inline bool span_less(const TimeSpan& a, const TimeSpan& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
}

// Round seconds onto the 1 ms storage grid.
inline double round_ms(double seconds) {
    return std::round(seconds * 1000.0) / 1000.0;
}

// Fixed two decimals; used for context serialization and trace output.
inline std::string format_seconds(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

// Shortest round-trip decimal form; used for SQL literals and CSV dumps.
inline std::string format_number(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

}  // namespace aq
