#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dlr/grid.hpp"

using namespace dlr;

namespace {

Grid two_bus_line() {
  Grid g;
  g.buses = {{1, 30.0, -97.0}, {2, 30.5, -97.5}};
  g.lines = {{10, 1, 2, 70.0}};
  return g;
}

}  // namespace

TEST_CASE("validate accepts a well-formed grid", "[grid]") {
  REQUIRE_NOTHROW(two_bus_line().validate());
}

TEST_CASE("validate rejects structural defects", "[grid]") {
  Grid g = two_bus_line();
  g.buses.push_back({1, 0.0, 0.0});
  REQUIRE_THROWS_WITH(g.validate(), Catch::Matchers::ContainsSubstring("duplicate bus"));

  g = two_bus_line();
  g.lines.push_back({10, 2, 1, 1.0});
  REQUIRE_THROWS_WITH(g.validate(), Catch::Matchers::ContainsSubstring("duplicate line"));

  g = two_bus_line();
  g.lines.push_back({11, 2, 2, 1.0});
  REQUIRE_THROWS_WITH(g.validate(), Catch::Matchers::ContainsSubstring("self-loop"));

  g = two_bus_line();
  g.lines.push_back({11, 3, 1, 1.0});
  REQUIRE_THROWS_WITH(g.validate(), Catch::Matchers::ContainsSubstring("unknown bus"));

  g = two_bus_line();
  g.lines.push_back({11, 2, 1, 1.0});  // same endpoints, reversed
  REQUIRE_THROWS_WITH(g.validate(), Catch::Matchers::ContainsSubstring("parallel"));
}

TEST_CASE("ordered_endpoints sorts by bus id", "[grid]") {
  Grid g = two_bus_line();
  g.lines[0].from = 2;
  g.lines[0].to = 1;
  auto [a, b] = g.ordered_endpoints(g.lines[0]);
  REQUIRE(a == 1);
  REQUIRE(b == 2);
}

TEST_CASE("great-circle distance against hand-checked values", "[grid]") {
  // same point
  REQUIRE(great_circle_km(30.0, -97.0, 30.0, -97.0) == 0.0);
  // one degree of latitude is about 111.2 km on a 6371 km sphere
  REQUIRE_THAT(great_circle_km(30.0, -97.0, 31.0, -97.0),
               Catch::Matchers::WithinAbs(111.195, 0.01));
  // symmetric in its arguments
  REQUIRE_THAT(great_circle_km(30.0, -97.0, 32.5, -95.25),
               Catch::Matchers::WithinAbs(great_circle_km(32.5, -95.25, 30.0, -97.0), 1e-12));
  // antipodal-ish sanity: quarter circumference
  REQUIRE_THAT(great_circle_km(0.0, 0.0, 0.0, 90.0),
               Catch::Matchers::WithinAbs(6371.0 * 3.14159265358979323846 / 2.0, 0.5));
}

TEST_CASE("line azimuth points along cardinal directions", "[grid]") {
  Grid g;
  g.buses = {{1, 30.0, -97.0}, {2, 31.0, -97.0}, {3, 30.0, -96.0}};
  g.lines = {{10, 1, 2, 1.0}, {11, 1, 3, 1.0}};
  // due north from bus 1 to bus 2
  REQUIRE_THAT(line_azimuth_deg(g, g.lines[0]), Catch::Matchers::WithinAbs(0.0, 1e-9));
  // due east, modulo the small spherical correction
  REQUIRE_THAT(line_azimuth_deg(g, g.lines[1]), Catch::Matchers::WithinAbs(90.0, 0.3));
  // endpoint ordering makes the azimuth independent of from/to order
  Line rev{12, 2, 1, 1.0};
  Grid g2 = g;
  g2.lines.push_back(rev);
  REQUIRE(line_azimuth_deg(g2, rev) == line_azimuth_deg(g, g.lines[0]));
}

TEST_CASE("topology json round-trip preserves the grid", "[grid]") {
  Grid g;
  g.buses = {{1, 30.0, -97.0}, {2, 30.5, -97.5}, {5, 31.0, -96.5}};
  g.lines = {{10, 1, 2, 70.0}, {11, 2, 5, 81.5}};
  Grid back = topology_from_json(topology_to_json(g));
  REQUIRE(back.buses.size() == g.buses.size());
  REQUIRE(back.lines.size() == g.lines.size());
  for (size_t i = 0; i < g.buses.size(); ++i) {
    REQUIRE(back.buses[i].id == g.buses[i].id);
    REQUIRE(back.buses[i].lat == g.buses[i].lat);
    REQUIRE(back.buses[i].lon == g.buses[i].lon);
  }
  for (size_t i = 0; i < g.lines.size(); ++i) {
    REQUIRE(back.lines[i].id == g.lines[i].id);
    REQUIRE(back.lines[i].from == g.lines[i].from);
    REQUIRE(back.lines[i].to == g.lines[i].to);
    REQUIRE(back.lines[i].length_km == g.lines[i].length_km);
  }
}

TEST_CASE("topology loader drops self-loops and parallel duplicates", "[grid]") {
  nlohmann::json j;
  j["buses"] = {{{"id", 1}, {"lat", 30.0}, {"lon", -97.0}},
                {{"id", 2}, {"lat", 30.5}, {"lon", -97.5}}};
  j["lines"] = {{{"id", 10}, {"from", 1}, {"to", 2}, {"length_km", 70.0}},
                {{"id", 11}, {"from", 2}, {"to", 1}, {"length_km", 70.0}},
                {{"id", 12}, {"from", 2}, {"to", 2}, {"length_km", 1.0}}};
  TopologyLoadReport rep;
  Grid g = topology_from_json(j, &rep);
  REQUIRE(g.lines.size() == 1);
  REQUIRE(g.lines[0].id == 10);  // first representative wins
  REQUIRE(rep.parallel_lines_dropped == 1);
  REQUIRE(rep.self_loops_dropped == 1);
}

TEST_CASE("topology loader requires buses and lines keys", "[grid]") {
  REQUIRE_THROWS_AS(topology_from_json(nlohmann::json{{"buses", nlohmann::json::array()}}),
                    std::invalid_argument);
}
