#include "shiftlab/clock.hpp"

#include <cctype>
#include <cstdio>

#include "shiftlab/errors.hpp"

namespace shiftlab {

// Civil <-> day-count conversions: Howard Hinnant's public-domain algorithms
// (days_from_civil / civil_from_days), valid far beyond the simulated range.
DayIndex day_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);                 // [0, 399]
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;      // [0, 365]
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;                // [0, 146096]
  return era * 146097LL + static_cast<int>(doe) - 719468;
}

CivilDate civil_from_day(DayIndex z) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);              // [0, 146096]
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long y = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);              // [0, 365]
  const unsigned mp = (5 * doy + 2) / 153;                                   // [0, 11]
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;                           // [1, 31]
  const unsigned m = mp + (mp < 10 ? 3 : -9);                                // [1, 12]
  return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

std::string date_str(DayIndex d) {
  CivilDate c = civil_from_day(d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", c.year, c.month, c.day);
  return buf;
}

namespace {

bool all_digits(std::string_view s) {
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return !s.empty();
}

int to_int(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

}  // namespace

DayIndex parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' || !all_digits(s.substr(0, 4)) ||
      !all_digits(s.substr(5, 2)) || !all_digits(s.substr(8, 2)))
    throw DataError("bad date '" + std::string(s) + "' (want YYYY-MM-DD)");
  int y = to_int(s.substr(0, 4)), m = to_int(s.substr(5, 2)), d = to_int(s.substr(8, 2));
  if (m < 1 || m > 12 || d < 1 || d > 31)
    throw DataError("bad date '" + std::string(s) + "' (out-of-range field)");
  DayIndex z = day_from_civil(y, m, d);
  CivilDate back = civil_from_day(z);
  if (back.year != y || back.month != m || back.day != d)
    throw DataError("bad date '" + std::string(s) + "' (no such day)");
  return z;
}

int civil_year(DayIndex d) { return civil_from_day(d).year; }

MonthKey month_of(DayIndex d) {
  CivilDate c = civil_from_day(d);
  return MonthKey{c.year, c.month};
}

std::string month_str(MonthKey m) {
  char buf[12];
  std::snprintf(buf, sizeof buf, "%04d-%02d", m.year, m.month);
  return buf;
}

MonthKey parse_month(std::string_view s) {
  if (s.size() != 7 || s[4] != '-' || !all_digits(s.substr(0, 4)) || !all_digits(s.substr(5, 2)))
    throw DataError("bad month '" + std::string(s) + "' (want YYYY-MM)");
  MonthKey k{to_int(s.substr(0, 4)), to_int(s.substr(5, 2))};
  if (k.month < 1 || k.month > 12)
    throw DataError("bad month '" + std::string(s) + "'");
  return k;
}

}  // namespace shiftlab
