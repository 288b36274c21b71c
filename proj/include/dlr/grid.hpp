#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dlr {

using BusId = int;
using LineId = int;

struct Bus {
  BusId id = 0;
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
};

struct Line {
  LineId id = 0;
  BusId from = 0;
  BusId to = 0;
  double length_km = 0.0;
};

/// Bus/line topology. Lines are undirected; self-loops and parallel lines
/// (same unordered endpoint pair) are invalid here -- deduplication happens
/// upstream when loading raw topology files.
struct Grid {
  std::vector<Bus> buses;
  std::vector<Line> lines;

  int bus_index(BusId id) const {
    for (size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == id) return static_cast<int>(i);
    return -1;
  }

  const Bus& bus(BusId id) const {
    int i = bus_index(id);
    if (i < 0) throw std::invalid_argument("Grid: unknown bus id " + std::to_string(id));
    return buses[i];
  }

  int line_index(LineId id) const {
    for (size_t i = 0; i < lines.size(); ++i)
      if (lines[i].id == id) return static_cast<int>(i);
    return -1;
  }

  /// Endpoints of a line sorted by bus id ascending. This is the documented
  /// ordering for feature concatenation.
  std::pair<BusId, BusId> ordered_endpoints(const Line& l) const {
    return l.from < l.to ? std::make_pair(l.from, l.to) : std::make_pair(l.to, l.from);
  }

  void validate() const {
    std::set<BusId> bus_ids;
    for (const auto& b : buses)
      if (!bus_ids.insert(b.id).second) throw std::invalid_argument("Grid: duplicate bus id " + std::to_string(b.id));
    std::set<LineId> line_ids;
    std::set<std::pair<BusId, BusId>> pairs;
    for (const auto& l : lines) {
      if (!line_ids.insert(l.id).second)
        throw std::invalid_argument("Grid: duplicate line id " + std::to_string(l.id));
      if (l.from == l.to) throw std::invalid_argument("Grid: self-loop on line " + std::to_string(l.id));
      if (!bus_ids.count(l.from) || !bus_ids.count(l.to))
        throw std::invalid_argument("Grid: line " + std::to_string(l.id) + " references unknown bus");
      if (!pairs.insert(ordered_endpoints(l)).second)
        throw std::invalid_argument("Grid: parallel line " + std::to_string(l.id) +
                                    " (endpoint pair already used)");
    }
  }
};

inline double deg2rad(double d) { return d * 3.14159265358979323846 / 180.0; }

/// Great-circle distance (haversine, R = 6371 km).
inline double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
  const double R = 6371.0;
  const double p1 = deg2rad(lat1), p2 = deg2rad(lat2);
  const double dp = deg2rad(lat2 - lat1), dl = deg2rad(lon2 - lon1);
  const double a = std::sin(dp / 2) * std::sin(dp / 2) + std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * R * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Initial compass bearing (degrees, [0,360)) from the first to the second
/// ordered endpoint. Used as the line azimuth for wind-attack angles.
inline double line_azimuth_deg(const Grid& g, const Line& l) {
  auto [a, b] = g.ordered_endpoints(l);
  const Bus& ba = g.bus(a);
  const Bus& bb = g.bus(b);
  const double p1 = deg2rad(ba.lat), p2 = deg2rad(bb.lat), dl = deg2rad(bb.lon - ba.lon);
  const double y = std::sin(dl) * std::cos(p2);
  const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  double deg = std::atan2(y, x) * 180.0 / 3.14159265358979323846;
  if (deg < 0) deg += 360.0;
  return deg;
}

struct TopologyLoadReport {
  int parallel_lines_dropped = 0;
  int self_loops_dropped = 0;
};

/// Parses the topology JSON schema
///   { "buses": [{"id", "lat", "lon"}], "lines": [{"id", "from", "to", "length_km"}] }
/// keeping exactly one representative among parallel lines (first wins) and
/// dropping self-loops. The returned grid passes Grid::validate().
inline Grid topology_from_json(const nlohmann::json& j, TopologyLoadReport* report = nullptr) {
  Grid g;
  if (!j.contains("buses") || !j.contains("lines")) throw std::invalid_argument("topology: need buses and lines");
  for (const auto& jb : j.at("buses"))
    g.buses.push_back(Bus{jb.at("id").get<BusId>(), jb.at("lat").get<double>(), jb.at("lon").get<double>()});
  std::set<std::pair<BusId, BusId>> pairs;
  TopologyLoadReport rep;
  for (const auto& jl : j.at("lines")) {
    Line l{jl.at("id").get<LineId>(), jl.at("from").get<BusId>(), jl.at("to").get<BusId>(),
           jl.at("length_km").get<double>()};
    if (l.from == l.to) {
      ++rep.self_loops_dropped;
      continue;
    }
    auto key = l.from < l.to ? std::make_pair(l.from, l.to) : std::make_pair(l.to, l.from);
    if (!pairs.insert(key).second) {
      ++rep.parallel_lines_dropped;
      continue;
    }
    g.lines.push_back(l);
  }
  if (report) *report = rep;
  g.validate();
  return g;
}

inline nlohmann::json topology_to_json(const Grid& g) {
  nlohmann::json j;
  j["buses"] = nlohmann::json::array();
  for (const auto& b : g.buses) j["buses"].push_back({{"id", b.id}, {"lat", b.lat}, {"lon", b.lon}});
  j["lines"] = nlohmann::json::array();
  for (const auto& l : g.lines)
    j["lines"].push_back({{"id", l.id}, {"from", l.from}, {"to", l.to}, {"length_km", l.length_km}});
  return j;
}

inline Grid load_topology_file(const std::string& path, TopologyLoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file: " + path);
  nlohmann::json j;
  in >> j;
  return topology_from_json(j, report);
}

}  // namespace dlr
