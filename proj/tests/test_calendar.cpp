#include <catch2/catch_amalgamated.hpp>

#include "dlr/calendar.hpp"

using namespace dlr;

TEST_CASE("parse_date round-trips and rejects junk", "[calendar]") {
  Date d = parse_date("2024-03-07");
  REQUIRE(d.year == 2024);
  REQUIRE(d.month == 3);
  REQUIRE(d.day == 7);
  REQUIRE_THROWS_AS(parse_date("2024/03/07"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_date("2024-13-01"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_date("not a date"), std::invalid_argument);
}

TEST_CASE("date_after_hours crosses month and year boundaries", "[calendar]") {
  Date d = date_after_hours(Date{2024, 1, 31}, 24);
  REQUIRE(d.month == 2);
  REQUIRE(d.day == 1);
  d = date_after_hours(Date{2023, 12, 31}, 25);
  REQUIRE(d.year == 2024);
  REQUIRE(d.month == 1);
  REQUIRE(d.day == 1);
  // leap day
  d = date_after_hours(Date{2024, 2, 28}, 24);
  REQUIRE(d.month == 2);
  REQUIRE(d.day == 29);
}

TEST_CASE("season assignment follows meteorological months", "[calendar]") {
  REQUIRE(season_of(Date{2024, 12, 15}) == Season::winter);
  REQUIRE(season_of(Date{2024, 1, 15}) == Season::winter);
  REQUIRE(season_of(Date{2024, 2, 29}) == Season::winter);
  REQUIRE(season_of(Date{2024, 3, 1}) == Season::spring);
  REQUIRE(season_of(Date{2024, 5, 31}) == Season::spring);
  REQUIRE(season_of(Date{2024, 6, 1}) == Season::summer);
  REQUIRE(season_of(Date{2024, 8, 31}) == Season::summer);
  REQUIRE(season_of(Date{2024, 9, 1}) == Season::fall);
  REQUIRE(season_of(Date{2024, 11, 30}) == Season::fall);
}

TEST_CASE("day_of_year handles leap years", "[calendar]") {
  REQUIRE(day_of_year(Date{2024, 1, 1}) == 1);
  REQUIRE(day_of_year(Date{2024, 3, 1}) == 61);  // 2024 is a leap year
  REQUIRE(day_of_year(Date{2023, 3, 1}) == 60);
  REQUIRE(day_of_year(Date{2024, 12, 31}) == 366);
}

TEST_CASE("timestamp_at emits hourly ISO strings", "[calendar]") {
  REQUIRE(timestamp_at(Date{2024, 1, 1}, 0) == "2024-01-01T00:00:00");
  REQUIRE(timestamp_at(Date{2024, 1, 1}, 23) == "2024-01-01T23:00:00");
  REQUIRE(timestamp_at(Date{2024, 1, 1}, 24) == "2024-01-02T00:00:00");
  REQUIRE(timestamp_at(Date{2024, 1, 1}, 47) == "2024-01-02T23:00:00");
}

TEST_CASE("invalid calendar dates are rejected", "[calendar]") {
  REQUIRE_THROWS_AS(to_sys_days(Date{2023, 2, 29}), std::invalid_argument);
}
