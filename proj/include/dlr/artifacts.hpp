#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlr/csv.hpp"
#include "dlr/dataset.hpp"
#include "dlr/grid.hpp"
#include "dlr/thermal.hpp"
#include "dlr/weather.hpp"

namespace dlr {

/// Hourly ampacities for every line from the weather at line midpoints
/// (mean of the two endpoint buses), hours x |E|.
inline Mat compute_ratings(const Grid& grid, const WeatherField& wf, const ConductorParams& cp) {
  const int e = static_cast<int>(grid.lines.size());
  Mat out(wf.hours, e);
  for (int i = 0; i < e; ++i) {
    const Line& l = grid.lines[i];
    const int b1 = grid.bus_index(l.from);
    const int b2 = grid.bus_index(l.to);
    const double az = line_azimuth_deg(grid, l);
    for (int t = 0; t < wf.hours; ++t) {
      const WeatherSample w1 = weather_at(wf, t, b1);
      const WeatherSample w2 = weather_at(wf, t, b2);
      WeatherSample mid;
      mid.ambient_temp_c = 0.5 * (w1.ambient_temp_c + w2.ambient_temp_c);
      mid.wind_speed_ms = 0.5 * (w1.wind_speed_ms + w2.wind_speed_ms);
      // circular mean of the two directions
      const double s = 0.5 * (std::sin(deg2rad(w1.wind_direction_deg)) + std::sin(deg2rad(w2.wind_direction_deg)));
      const double c = 0.5 * (std::cos(deg2rad(w1.wind_direction_deg)) + std::cos(deg2rad(w2.wind_direction_deg)));
      double dir = std::atan2(s, c) * 180.0 / 3.14159265358979323846;
      if (dir < 0.0) dir += 360.0;
      mid.wind_direction_deg = dir;
      mid.solar_wm2 = 0.5 * (w1.solar_wm2 + w2.solar_wm2);
      out(t, i) = ampacity(cp, mid, az);
    }
  }
  return out;
}

inline void write_weather_csv(const std::string& path, const Grid& grid, const WeatherField& wf) {
  csv::Writer w(path);
  w.row({"timestamp", "bus_id", "temp_c", "wind_speed_ms", "wind_dir_deg", "solar_wm2"});
  for (int t = 0; t < wf.hours; ++t) {
    const std::string ts = timestamp_at(wf.start, t);
    for (size_t b = 0; b < grid.buses.size(); ++b)
      w.row({ts, std::to_string(grid.buses[b].id), csv::fmt(wf.temp_c(t, static_cast<int>(b))),
             csv::fmt(wf.wind_speed_ms(t, static_cast<int>(b))), csv::fmt(wf.wind_dir_deg(t, static_cast<int>(b))),
             csv::fmt(wf.solar_wm2(t, static_cast<int>(b)))});
  }
  w.close();
}

inline void write_ratings_csv(const std::string& path, const Grid& grid, const Date& start, const Mat& ratings) {
  csv::Writer w(path);
  w.row({"timestamp", "line_id", "rating_a"});
  for (int t = 0; t < ratings.rows; ++t) {
    const std::string ts = timestamp_at(start, t);
    for (size_t i = 0; i < grid.lines.size(); ++i)
      w.row({ts, std::to_string(grid.lines[i].id), csv::fmt(ratings(t, static_cast<int>(i)))});
  }
  w.close();
}

/// Rows must be hour-major with buses in topology order within each hour.
inline WeatherField read_weather_csv(const std::string& path, const Grid& grid) {
  csv::Table t = csv::read_file(path);
  const int ts_c = t.column("timestamp"), bus_c = t.column("bus_id"), temp_c = t.column("temp_c"),
            ws_c = t.column("wind_speed_ms"), wd_c = t.column("wind_dir_deg"), sol_c = t.column("solar_wm2");
  const int n_bus = static_cast<int>(grid.buses.size());
  if (t.rows.empty() || t.rows.size() % n_bus != 0)
    throw std::runtime_error(path + ": row count not a multiple of the bus count");
  WeatherField wf;
  wf.hours = static_cast<int>(t.rows.size()) / n_bus;
  wf.start = parse_date(t.rows.front()[ts_c].substr(0, 10));
  wf.temp_c = Mat(wf.hours, n_bus);
  wf.wind_speed_ms = Mat(wf.hours, n_bus);
  wf.wind_dir_deg = Mat(wf.hours, n_bus);
  wf.solar_wm2 = Mat(wf.hours, n_bus);
  size_t r = 0;
  for (int h = 0; h < wf.hours; ++h)
    for (int b = 0; b < n_bus; ++b, ++r) {
      const auto& row = t.rows[r];
      if (csv::parse_long(row[bus_c]) != grid.buses[b].id)
        throw std::runtime_error(path + ": bus order mismatch at row " + std::to_string(r + 2));
      wf.temp_c(h, b) = csv::parse_double(row[temp_c]);
      wf.wind_speed_ms(h, b) = csv::parse_double(row[ws_c]);
      wf.wind_dir_deg(h, b) = csv::parse_double(row[wd_c]);
      wf.solar_wm2(h, b) = csv::parse_double(row[sol_c]);
    }
  return wf;
}

inline Mat read_ratings_csv(const std::string& path, const Grid& grid) {
  csv::Table t = csv::read_file(path);
  const int line_c = t.column("line_id"), val_c = t.column("rating_a");
  const int n_lines = static_cast<int>(grid.lines.size());
  if (t.rows.empty() || t.rows.size() % n_lines != 0)
    throw std::runtime_error(path + ": row count not a multiple of the line count");
  const int hours = static_cast<int>(t.rows.size()) / n_lines;
  Mat out(hours, n_lines);
  size_t r = 0;
  for (int h = 0; h < hours; ++h)
    for (int i = 0; i < n_lines; ++i, ++r) {
      const auto& row = t.rows[r];
      if (csv::parse_long(row[line_c]) != grid.lines[i].id)
        throw std::runtime_error(path + ": line order mismatch at row " + std::to_string(r + 2));
      out(h, i) = csv::parse_double(row[val_c]);
    }
  return out;
}

struct DataDir {
  Grid grid;
  WeatherField weather;
  Mat ratings;
  nlohmann::json manifest;
};

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
  f.close();
  if (!f) throw std::runtime_error("short write on " + path);
}

/// The four gen-data artifacts.
inline void write_data_dir(const std::string& dir, const Grid& grid, const WeatherField& wf, const Mat& ratings,
                           const nlohmann::json& manifest) {
  std::filesystem::create_directories(dir);
  write_json_file(dir + "/topology.json", topology_to_json(grid));
  write_weather_csv(dir + "/weather.csv", grid, wf);
  write_ratings_csv(dir + "/ratings.csv", grid, wf.start, ratings);
  write_json_file(dir + "/manifest.json", manifest);
}

inline DataDir load_data_dir(const std::string& dir) {
  for (const char* f : {"/topology.json", "/weather.csv", "/ratings.csv", "/manifest.json"})
    if (!std::filesystem::exists(dir + f))
      throw std::runtime_error("dataset incomplete: missing " + dir + f + " (run gen-data first)");
  DataDir d;
  d.grid = load_topology_file(dir + "/topology.json");
  d.weather = read_weather_csv(dir + "/weather.csv", d.grid);
  d.ratings = read_ratings_csv(dir + "/ratings.csv", d.grid);
  if (d.ratings.rows != d.weather.hours)
    throw std::runtime_error("dataset inconsistent: ratings hours != weather hours");
  std::ifstream mf(dir + "/manifest.json");
  d.manifest = nlohmann::json::parse(mf);
  const std::string want = feature_schema_hash();
  const std::string got = d.manifest.at("schema").at("hash").get<std::string>();
  if (got != want)
    throw std::runtime_error("dataset manifest schema hash " + got + " does not match this build (" + want + ")");
  return d;
}

}  // namespace dlr
