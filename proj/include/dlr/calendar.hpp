#pragma once

#include <chrono>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace dlr {

/// Season index used by the line feature one-hot: spring=0, summer=1,
/// fall=2, winter=3. Meteorological seasons by month (Dec-Feb = winter).
enum class Season : int { spring = 0, summer = 1, fall = 2, winter = 3 };

struct Date {
  int year = 2024;
  unsigned month = 1;  // 1..12
  unsigned day = 1;    // 1..31
};

inline Date parse_date(const std::string& s) {
  Date d;
  if (std::sscanf(s.c_str(), "%d-%u-%u", &d.year, &d.month, &d.day) != 3 || d.month < 1 || d.month > 12 ||
      d.day < 1 || d.day > 31)
    throw std::invalid_argument("parse_date: expected YYYY-MM-DD, got '" + s + "'");
  return d;
}

inline std::chrono::sys_days to_sys_days(const Date& d) {
  using namespace std::chrono;
  year_month_day ymd{year{d.year}, month{d.month}, day{d.day}};
  if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
  return sys_days{ymd};
}

/// Calendar date reached `hours` after midnight of `start`.
inline Date date_after_hours(const Date& start, long hours) {
  using namespace std::chrono;
  sys_days sd = to_sys_days(start) + days{hours / 24};
  year_month_day ymd{sd};
  return Date{int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day())};
}

inline Season season_of(const Date& d) {
  switch (d.month) {
    case 3: case 4: case 5: return Season::spring;
    case 6: case 7: case 8: return Season::summer;
    case 9: case 10: case 11: return Season::fall;
    default: return Season::winter;
  }
}

/// 1-based day of year (1..366), used to phase the seasonal cycle.
inline int day_of_year(const Date& d) {
  using namespace std::chrono;
  sys_days sd = to_sys_days(d);
  sys_days jan1 = to_sys_days(Date{d.year, 1, 1});
  return int((sd - jan1).count()) + 1;
}

/// ISO-8601 timestamp "YYYY-MM-DDTHH:00:00" for `hours` after midnight of
/// `start`. All series in the project are hourly.
inline std::string timestamp_at(const Date& start, long hours) {
  Date d = date_after_hours(start, hours);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:00:00", d.year, d.month, d.day, hours % 24);
  return buf;
}

}  // namespace dlr
