#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "shiftlab/clock.hpp"
#include "shiftlab/errors.hpp"
#include "shiftlab/rng.hpp"

using namespace shiftlab;

namespace {

// Independent calendar oracle: walk day-by-day from 1970-01-01 applying the
// Gregorian leap rule directly.
bool oracle_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int oracle_month_len(int y, int m) {
  static const int len[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && oracle_leap(y) ? 29 : len[m - 1];
}

}  // namespace

TEST_CASE("day arithmetic splits at midnight, including negative times") {
  CHECK(day_of(0) == 0);
  CHECK(day_of(1439) == 0);
  CHECK(day_of(1440) == 1);
  CHECK(day_of(-1) == -1);
  CHECK(day_of(-1440) == -1);
  CHECK(day_of(-1441) == -2);
  for (DayIndex d : {-400L, -1L, 0L, 1L, 999L}) {
    CHECK(day_of(day_start(d)) == d);
    CHECK(day_of(day_start(d) + 1439) == d);
    CHECK(day_of(day_start(d) + 1440) == d + 1);
  }
}

TEST_CASE("civil conversions agree with a day-by-day Gregorian walk") {
  DayIndex z = 0;
  for (int y = 1970; y <= 2105; ++y)
    for (int m = 1; m <= 12; ++m)
      for (int d = 1; d <= oracle_month_len(y, m); ++d) {
        REQUIRE(day_from_civil(y, m, d) == z);
        const CivilDate c = civil_from_day(z);
        REQUIRE(c.year == y);
        REQUIRE(c.month == m);
        REQUIRE(c.day == d);
        ++z;
      }
  // a stretch before the epoch
  z = day_from_civil(1960, 1, 1);
  for (int y = 1960; y < 1970; ++y)
    for (int m = 1; m <= 12; ++m)
      for (int d = 1; d <= oracle_month_len(y, m); ++d) {
        REQUIRE(day_from_civil(y, m, d) == z);
        ++z;
      }
  CHECK(z == 0);
}

TEST_CASE("date text round-trips and strict parsing rejects malformed input") {
  CHECK(date_str(0) == "1970-01-01");
  CHECK(parse_date("1970-01-01") == 0);
  CHECK(date_str(parse_date("2013-07-01")) == "2013-07-01");
  CHECK(parse_date("2016-02-29") == day_from_civil(2016, 2, 29));  // leap day
  CHECK(parse_date("2000-02-29") == day_from_civil(2000, 2, 29));  // 400-rule leap
  for (const char* bad : {"2013-7-01", "2013-07-1", "13-07-01", "2013/07/01", "2013-07-32",
                          "2013-13-01", "2013-00-10", "2013-07-00", "2015-02-29", "2100-02-29",
                          "", "2013-07-01x", "x2013-07-01", "2013-07", "20130701"}) {
    CHECK_THROWS_AS(parse_date(bad), DataError);
  }
  CHECK(civil_year(parse_date("1999-12-31")) == 1999);
  CHECK(civil_year(parse_date("2000-01-01")) == 2000);
}

TEST_CASE("month keys group by admission month and order chronologically") {
  const MonthKey a = month_of(parse_date("2019-01-31"));
  const MonthKey b = month_of(parse_date("2019-02-01"));
  CHECK(a == MonthKey{2019, 1});
  CHECK(b == MonthKey{2019, 2});
  CHECK(a < b);
  CHECK(month_str(a) == "2019-01");
  CHECK(parse_month("2019-01") == a);
  for (const char* bad : {"2019-1", "2019-13", "2019-00", "2019", "2019-01-01", "x2019-01", ""})
    CHECK_THROWS_AS(parse_month(bad), DataError);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("rng streams are deterministic and key-separated") {
  Rng a(42, {stream::kTruth, 7});
  Rng b(42, {stream::kTruth, 7});
  Rng c(42, {stream::kTruth, 8});
  Rng d(42, {7, stream::kTruth});  // key order matters
  bool same_ab = true, same_ac = true, same_ad = true;
  std::vector<std::uint64_t> draws_a;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = a.next();
    draws_a.push_back(x);
    same_ab &= x == b.next();
    same_ac &= x == c.next();
    same_ad &= x == d.next();
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);
  CHECK_FALSE(same_ad);
  Rng a2(42, {stream::kTruth, 7});
  for (int i = 0; i < 64; ++i) REQUIRE(a2.next() == draws_a[static_cast<std::size_t>(i)]);
}

TEST_CASE("uniform01 lies in [0,1) with the expected mean") {
  Rng r(1, {fnv1a64("u01")});
  double sum = 0;
  for (int i = 0; i < 200000; ++i) {
    const double u = r.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 200000 - 0.5) < 0.005);
}

TEST_CASE("below(n) is unbiased across residues and handles edge sizes") {
  Rng r(9, {fnv1a64("below")});
  CHECK(r.below(0) == 0);
  CHECK(r.below(1) == 0);
  std::map<std::uint64_t, int> counts;
  const int n_draws = 70000;
  for (int i = 0; i < n_draws; ++i) ++counts[r.below(7)];
  CHECK(counts.size() == 7);
  for (const auto& [v, c] : counts) {
    CHECK(v < 7);
    CHECK(std::abs(c - n_draws / 7) < n_draws / 70);  // within 10%
  }
}

TEST_CASE("bernoulli frequency tracks p") {
  Rng r(3, {fnv1a64("bern")});
  int hits = 0;
  for (int i = 0; i < 100000; ++i) hits += r.bernoulli(0.2) ? 1 : 0;
  CHECK(std::abs(hits / 100000.0 - 0.2) < 0.01);
}

TEST_CASE("normal draws have standard moments; lognormal has the requested median") {
  Rng r(5, {fnv1a64("norm")});
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);

  std::vector<double> ln;
  Rng r2(5, {fnv1a64("lognorm")});
  for (int i = 0; i < 50001; ++i) ln.push_back(r2.lognormal(4.0, 0.8));
  std::nth_element(ln.begin(), ln.begin() + 25000, ln.end());
  CHECK(std::abs(ln[25000] - 4.0) < 0.15);
}
