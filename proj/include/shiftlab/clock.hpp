#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace shiftlab {

// Simulation time: whole minutes since 1970-01-01 00:00. Calendar days split
// at midnight; DayIndex counts days since 1970-01-01.
using Minutes = std::int64_t;
using DayIndex = std::int64_t;

inline constexpr Minutes kMinutesPerDay = 24 * 60;

constexpr DayIndex day_of(Minutes t) {
  return t >= 0 ? t / kMinutesPerDay : -((-t + kMinutesPerDay - 1) / kMinutesPerDay);
}
constexpr Minutes day_start(DayIndex d) { return d * kMinutesPerDay; }

struct CivilDate {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  auto operator<=>(const CivilDate&) const = default;
};

DayIndex day_from_civil(int year, int month, int day);
CivilDate civil_from_day(DayIndex z);

std::string date_str(DayIndex d);          // YYYY-MM-DD
DayIndex parse_date(std::string_view s);   // strict YYYY-MM-DD; throws DataError
int civil_year(DayIndex d);

// Month-year bucket used for monthly metric grouping.
struct MonthKey {
  int year = 0;
  int month = 0;
  auto operator<=>(const MonthKey&) const = default;
};

MonthKey month_of(DayIndex d);
std::string month_str(MonthKey m);         // YYYY-MM
MonthKey parse_month(std::string_view s);  // strict YYYY-MM; throws DataError

}  // namespace shiftlab
