#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

namespace deeper {

using json = nlohmann::json;

enum class ErrorCode {
    precondition,
    parse,
    validation,
    not_found,
    transport,
    protocol,
    integrity,
    unavailable,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::parse: return "parse";
        case ErrorCode::validation: return "validation";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::transport: return "transport";
        case ErrorCode::protocol: return "protocol";
        case ErrorCode::integrity: return "integrity";
        case ErrorCode::unavailable: return "unavailable";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) fail(code, what);
}

// --- string helpers -------------------------------------------------------

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Trim leading/trailing whitespace and collapse interior runs to one space.
inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            if (!in_space && !out.empty()) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(static_cast<char>(c));
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

/// Case-folded, whitespace-collapsed form used for name and query matching.
inline std::string normalize_text(std::string_view s) {
    return to_lower(collapse_whitespace(s));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

// --- digests ---------------------------------------------------------------

/// FNV-1a 64-bit. Used for cache keys, mock script digests and run ids.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex_digest(std::string_view data) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

// --- clock ------------------------------------------------------------------

/// Injectable time source. Live code uses SystemClock; tests pin a FakeClock.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::chrono::milliseconds now() const = 0;
    virtual void sleep_for(std::chrono::milliseconds d) = 0;

    /// Seconds since epoch, convenience for timestamps.
    std::int64_t unix_seconds() const {
        return std::chrono::duration_cast<std::chrono::seconds>(now()).count();
    }

    int utc_year() const {
        // 1970 plus elapsed Gregorian years; good enough for recency cutoffs.
        std::time_t t = static_cast<std::time_t>(unix_seconds());
        std::tm tm{};
        gmtime_r(&t, &tm);
        return tm.tm_year + 1900;
    }
};

class SystemClock final : public Clock {
public:
    std::chrono::milliseconds now() const override {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch());
    }
    void sleep_for(std::chrono::milliseconds d) override {
        std::this_thread::sleep_for(d);
    }
};

/// Virtual clock: sleep_for advances time instead of blocking.
class FakeClock final : public Clock {
public:
    explicit FakeClock(std::chrono::milliseconds start = std::chrono::milliseconds{0})
        : now_(start) {}

    std::chrono::milliseconds now() const override { return now_; }
    void sleep_for(std::chrono::milliseconds d) override { now_ += d; }
    void advance(std::chrono::milliseconds d) { now_ += d; }

private:
    std::chrono::milliseconds now_;
};

}  // namespace deeper
