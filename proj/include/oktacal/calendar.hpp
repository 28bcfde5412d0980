#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "oktacal/errors.hpp"

namespace oktacal {

using Date = std::chrono::sys_days;

inline Date make_date(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) throw DomainError("invalid calendar date");
    return Date{ymd};
}

inline int year_of(Date d) { return static_cast<int>(std::chrono::year_month_day{d}.year()); }

inline unsigned month_of(Date d) {
    return static_cast<unsigned>(std::chrono::year_month_day{d}.month());
}

inline unsigned day_of_year(Date d) {
    const auto jan1 = Date{std::chrono::year_month_day{std::chrono::year{year_of(d)}/1/1}};
    return static_cast<unsigned>((d - jan1).count()) + 1;
}

/// Parses YYYY-MM-DD.
inline Date parse_iso_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const std::string buf(s);
    if (buf.size() != 10 || std::sscanf(buf.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        throw DomainError("malformed ISO-8601 date '" + buf + "'");
    return make_date(y, m, d);
}

inline std::string format_iso_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

enum class Season { Summer, Winter };

/// Apr 1 - Sep 30 is the summer half-year, Oct 1 - Mar 31 the winter one.
inline Season season_of(Date d) {
    const unsigned m = month_of(d);
    return (m >= 4 && m <= 9) ? Season::Summer : Season::Winter;
}

inline const char* to_string(Season s) { return s == Season::Summer ? "AMJJAS" : "ONDJFM"; }

}  // namespace oktacal
