#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <string>
#include <string_view>

#include "aeromap/common.hpp"

namespace aeromap {

struct CivilDate {
    int year = 1970;
    int month = 1;
    int day = 1;

    auto operator<=>(const CivilDate&) const = default;
};

/// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(const CivilDate& c) {
    int y = c.year - (c.month <= 2 ? 1 : 0);
    std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    unsigned yoe = static_cast<unsigned>(y - era * 400);
    unsigned doy = (153u * (c.month + (c.month > 2 ? -3 : 9)) + 2) / 5 + c.day - 1;
    unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    unsigned doe = static_cast<unsigned>(z - era * 146097);
    unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    unsigned mp = (5 * doy + 2) / 153;
    unsigned d = doy - (153 * mp + 2) / 5 + 1;
    unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2 ? 1 : 0)), static_cast<int>(m),
            static_cast<int>(d)};
}

/// ISO weekday, 1 = Monday .. 7 = Sunday.
inline int weekday_from_days(std::int64_t z) {
    // 1970-01-01 was a Thursday (ISO 4).
    std::int64_t w = (z + 3) % 7;
    if (w < 0) w += 7;
    return static_cast<int>(w) + 1;
}

/// An instant plus the UTC offset its source carried. Local wall time is
/// utc_s + offset_s.
struct Timestamp {
    double utc_s = 0.0;
    int offset_s = 0;

    double local_s() const { return utc_s + offset_s; }
    std::int64_t local_day() const {
        return static_cast<std::int64_t>(std::floor(local_s() / 86400.0));
    }
    double local_seconds_of_day() const {
        return local_s() - static_cast<double>(local_day()) * 86400.0;
    }
    int local_weekday() const { return weekday_from_days(local_day()); }
};

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|+HHMM|+HH]". A space may
/// stand in for the 'T'. Missing offset means UTC.
inline Timestamp parse_iso8601(std::string_view s) {
    auto bad = [&] {
        throw ContractViolation("unparseable ISO-8601 timestamp: " + std::string(s));
    };
    auto digits = [&](std::size_t pos, int n) -> long {
        if (pos + n > s.size()) bad();
        long v = 0;
        for (int i = 0; i < n; ++i) {
            char c = s[pos + i];
            if (c < '0' || c > '9') bad();
            v = v * 10 + (c - '0');
        }
        return v;
    };
    if (s.size() < 19) bad();
    CivilDate date{static_cast<int>(digits(0, 4)), static_cast<int>(digits(5, 2)),
                   static_cast<int>(digits(8, 2))};
    if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ')) bad();
    if (s[13] != ':' || s[16] != ':') bad();
    long hh = digits(11, 2), mm = digits(14, 2), ss = digits(17, 2);
    if (date.month < 1 || date.month > 12 || date.day < 1 || date.day > 31 ||
        hh > 23 || mm > 59 || ss > 60)
        bad();
    std::size_t pos = 19;
    double frac = 0.0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        double scale = 0.1;
        bool any = false;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            frac += (s[pos] - '0') * scale;
            scale *= 0.1;
            ++pos;
            any = true;
        }
        if (!any) bad();
    }
    int offset = 0;
    if (pos < s.size()) {
        char c = s[pos];
        if (c == 'Z') {
            ++pos;
        } else if (c == '+' || c == '-') {
            int sign = c == '+' ? 1 : -1;
            ++pos;
            long oh = digits(pos, 2);
            pos += 2;
            long om = 0;
            if (pos < s.size() && s[pos] == ':') {
                om = digits(pos + 1, 2);
                pos += 3;
            } else if (pos + 2 <= s.size() && s[pos] >= '0' && s[pos] <= '9') {
                om = digits(pos, 2);
                pos += 2;
            }
            offset = sign * static_cast<int>(oh * 3600 + om * 60);
        } else {
            bad();
        }
    }
    if (pos != s.size()) bad();
    double utc = static_cast<double>(days_from_civil(date)) * 86400.0 +
                 hh * 3600.0 + mm * 60.0 + ss + frac - offset;
    return {utc, offset};
}

/// Formats with the timestamp's own offset; fractional part kept to
/// millisecond resolution when present.
inline std::string format_iso8601(const Timestamp& ts) {
    double local = ts.local_s();
    double day_f = std::floor(local / 86400.0);
    std::int64_t day = static_cast<std::int64_t>(day_f);
    double sod = local - day_f * 86400.0;
    // Guard against sod landing exactly on 86400 through rounding.
    if (sod >= 86400.0) {
        sod -= 86400.0;
        ++day;
    }
    CivilDate d = civil_from_days(day);
    int hh = static_cast<int>(sod / 3600.0);
    int mm = static_cast<int>((sod - hh * 3600.0) / 60.0);
    double sec = sod - hh * 3600.0 - mm * 60.0;
    long ms = std::lround(sec * 1000.0);
    long ss = ms / 1000;
    ms %= 1000;
    char buf[48];
    char* p = buf;
    p += std::snprintf(p, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02ld",
                       d.year, d.month, d.day, hh, mm, ss);
    if (ms != 0) p += std::snprintf(p, sizeof(buf) - (p - buf), ".%03ld", ms);
    if (ts.offset_s == 0) {
        std::snprintf(p, sizeof(buf) - (p - buf), "Z");
    } else {
        int off = ts.offset_s;
        char sign = off < 0 ? '-' : '+';
        off = std::abs(off);
        std::snprintf(p, sizeof(buf) - (p - buf), "%c%02d:%02d", sign,
                      off / 3600, (off % 3600) / 60);
    }
    return buf;
}

/// Parses "YYYY-MM-DD".
inline CivilDate parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
        throw ContractViolation("unparseable date: " + std::string(s));
    auto num = [&](std::size_t pos, int n) {
        long v = 0;
        for (int i = 0; i < n; ++i) {
            char c = s[pos + i];
            if (c < '0' || c > '9')
                throw ContractViolation("unparseable date: " + std::string(s));
            v = v * 10 + (c - '0');
        }
        return static_cast<int>(v);
    };
    return {num(0, 4), num(5, 2), num(8, 2)};
}

inline std::string format_date(const CivilDate& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

} // namespace aeromap
