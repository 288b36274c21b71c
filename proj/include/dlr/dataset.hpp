#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlr/calendar.hpp"
#include "dlr/grid.hpp"
#include "dlr/line_graph.hpp"
#include "dlr/mat.hpp"
#include "dlr/weather.hpp"

namespace dlr {

inline constexpr int kHistoryHours = 168;  // seven days
inline constexpr int kHorizonHours = 24;   // next day
inline constexpr int kWindowStride = 24;
inline constexpr int kWindowSpan = kHistoryHours + kHorizonHours;

inline const std::vector<std::string>& bus_feature_names() {
  static const std::vector<std::string> names = {"temp_c", "wind_speed_ms", "wind_dir_sin", "wind_dir_cos",
                                                 "solar_wm2", "lat", "lon"};
  return names;
}

inline const std::vector<std::string>& line_feature_names() {
  static const std::vector<std::string> names = {"prev_hour_dlr_a", "length_km", "season_spring",
                                                 "season_summer",   "season_fall", "season_winter"};
  return names;
}

inline EdgeFeatureSchema feature_schema() {
  return EdgeFeatureSchema{static_cast<int>(bus_feature_names().size()),
                           static_cast<int>(line_feature_names().size())};
}

/// Full ordered feature-name list for one line-graph node row.
inline std::vector<std::string> full_feature_names() {
  std::vector<std::string> out;
  for (const auto& n : bus_feature_names()) out.push_back("bus1_" + n);
  for (const auto& n : bus_feature_names()) out.push_back("bus2_" + n);
  for (const auto& n : line_feature_names()) out.push_back("line_" + n);
  return out;
}

/// FNV-1a hash of the feature ordering; stored in manifests and checkpoints
/// so stale artifacts are rejected instead of silently misread.
inline std::string feature_schema_hash() {
  uint64_t h = 1469598103934665603ull;
  for (const auto& name : full_feature_names())
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Per-bus feature rows at one hour: temp, wind speed, wind direction as a
/// sin/cos pair (no 0/360 seam), solar, latitude, longitude.
inline Mat bus_features_at(const Grid& grid, const WeatherField& wf, int hour) {
  const int n = static_cast<int>(grid.buses.size());
  Mat m(n, static_cast<int>(bus_feature_names().size()));
  for (int b = 0; b < n; ++b) {
    const double dir = deg2rad(wf.wind_dir_deg(hour, b));
    m(b, 0) = wf.temp_c(hour, b);
    m(b, 1) = wf.wind_speed_ms(hour, b);
    m(b, 2) = std::sin(dir);
    m(b, 3) = std::cos(dir);
    m(b, 4) = wf.solar_wm2(hour, b);
    m(b, 5) = grid.buses[b].lat;
    m(b, 6) = grid.buses[b].lon;
  }
  return m;
}

/// Per-line feature rows at one hour: previous-hour rating (hour 0 reuses its
/// own rating), line length, season one-hot (spring, summer, fall, winter).
inline Mat line_features_at(const Grid& grid, const Mat& ratings, const Date& start, int hour) {
  const int e = static_cast<int>(grid.lines.size());
  Mat m(e, static_cast<int>(line_feature_names().size()));
  const Season season = season_of(date_after_hours(start, hour));
  const int prev = hour > 0 ? hour - 1 : 0;
  for (int i = 0; i < e; ++i) {
    m(i, 0) = ratings(prev, i);
    m(i, 1) = grid.lines[i].length_km;
    m(i, 2 + static_cast<int>(season)) = 1.0;
  }
  return m;
}

/// Raw (un-normalized) line-graph feature matrix (|E| x 20) for one hour.
inline Mat features_at(const Grid& grid, const WeatherField& wf, const Mat& ratings, int hour) {
  return assemble_line_features(grid, feature_schema(), bus_features_at(grid, wf, hour),
                                line_features_at(grid, ratings, wf.start, hour));
}

struct NormStats {
  std::vector<double> feature_mean, feature_std;  // per feature column
  std::vector<double> target_min, target_max;     // per line
};

/// Forecast-window start hours: every 24 h from 0, each window spanning
/// 168 h of history plus the 24 h target day, ending strictly before the
/// series end.
inline std::vector<int> window_starts(int total_hours) {
  std::vector<int> starts;
  for (int s = 0; s + kWindowSpan < total_hours; s += kWindowStride) starts.push_back(s);
  return starts;
}

/// Sliding-window dataset over one grid: normalized hourly feature matrices,
/// per-line normalized targets, and the chronological 4:1 train/test split.
struct WindowedDataset {
  EdgeFeatureSchema schema;
  Date start_date;
  int hours = 0;
  int n_lines = 0;
  std::vector<LineId> line_ids;
  std::vector<Mat> features;  // per hour, |E| x total_dim, z-scored with train stats
  Mat ratings;                // hours x |E|, raw amperes
  Mat ratings_norm;           // hours x |E|, per-line min-max scaled with train stats
  std::vector<int> train_starts, test_starts;
  NormStats stats;

  /// Normalized target block (|E| x 24) for the window starting at `s`.
  Mat target_norm(int s) const { return target_from(ratings_norm, s); }
  /// Raw-ampere target block for the window starting at `s`.
  Mat target_raw(int s) const { return target_from(ratings, s); }

 private:
  Mat target_from(const Mat& src, int s) const {
    Mat t(n_lines, kHorizonHours);
    for (int i = 0; i < n_lines; ++i)
      for (int h = 0; h < kHorizonHours; ++h) t(i, h) = src(s + kHistoryHours + h, i);
    return t;
  }
};

/// Assembles the dataset: builds raw features per hour, splits windows
/// chronologically 4:1, computes normalization statistics on the training
/// span only, and applies them everywhere.
inline WindowedDataset make_windowed_dataset(const Grid& grid, const WeatherField& wf, const Mat& ratings) {
  if (ratings.rows != wf.hours || ratings.cols != static_cast<int>(grid.lines.size()))
    throw std::invalid_argument("make_windowed_dataset: ratings " + shape_str(ratings) +
                                " misaligned with weather/lines");
  WindowedDataset ds;
  ds.schema = feature_schema();
  ds.start_date = wf.start;
  ds.hours = wf.hours;
  ds.n_lines = static_cast<int>(grid.lines.size());
  for (const auto& l : grid.lines) ds.line_ids.push_back(l.id);
  ds.ratings = ratings;

  const auto starts = window_starts(ds.hours);
  if (starts.size() < 2) throw std::invalid_argument("make_windowed_dataset: insufficient data (< 2 windows)");
  const int n_train = static_cast<int>(starts.size()) * 4 / 5;
  if (n_train < 1 || n_train == static_cast<int>(starts.size()))
    throw std::invalid_argument("make_windowed_dataset: split produced an empty side");
  ds.train_starts.assign(starts.begin(), starts.begin() + n_train);
  ds.test_starts.assign(starts.begin() + n_train, starts.end());

  ds.features.reserve(ds.hours);
  for (int t = 0; t < ds.hours; ++t) ds.features.push_back(features_at(grid, wf, ratings, t));

  // Training span: every hour any training window touches.
  const int train_hours = ds.train_starts.back() + kWindowSpan;
  const int d = ds.schema.total_dim();
  ds.stats.feature_mean.assign(d, 0.0);
  ds.stats.feature_std.assign(d, 0.0);
  const double cnt = static_cast<double>(train_hours) * ds.n_lines;
  for (int t = 0; t < train_hours; ++t)
    for (int i = 0; i < ds.n_lines; ++i)
      for (int k = 0; k < d; ++k) ds.stats.feature_mean[k] += ds.features[t](i, k);
  for (int k = 0; k < d; ++k) ds.stats.feature_mean[k] /= cnt;
  for (int t = 0; t < train_hours; ++t)
    for (int i = 0; i < ds.n_lines; ++i)
      for (int k = 0; k < d; ++k) {
        const double c = ds.features[t](i, k) - ds.stats.feature_mean[k];
        ds.stats.feature_std[k] += c * c;
      }
  for (int k = 0; k < d; ++k) {
    ds.stats.feature_std[k] = std::sqrt(ds.stats.feature_std[k] / cnt);
    if (ds.stats.feature_std[k] < 1e-12) ds.stats.feature_std[k] = 1.0;  // constant column
  }
  for (auto& f : ds.features)
    for (int i = 0; i < ds.n_lines; ++i)
      for (int k = 0; k < d; ++k) f(i, k) = (f(i, k) - ds.stats.feature_mean[k]) / ds.stats.feature_std[k];

  // Per-line target scaling from the training span's target hours.
  ds.stats.target_min.assign(ds.n_lines, 0.0);
  ds.stats.target_max.assign(ds.n_lines, 0.0);
  for (int i = 0; i < ds.n_lines; ++i) {
    double lo = ratings(kHistoryHours, i), hi = lo;
    for (int t = kHistoryHours; t < train_hours; ++t) {
      lo = std::min(lo, ratings(t, i));
      hi = std::max(hi, ratings(t, i));
    }
    ds.stats.target_min[i] = lo;
    ds.stats.target_max[i] = hi > lo + 1e-9 ? hi : lo + 1.0;
  }
  ds.ratings_norm = Mat(ds.hours, ds.n_lines);
  for (int t = 0; t < ds.hours; ++t)
    for (int i = 0; i < ds.n_lines; ++i)
      ds.ratings_norm(t, i) =
          (ratings(t, i) - ds.stats.target_min[i]) / (ds.stats.target_max[i] - ds.stats.target_min[i]);
  return ds;
}

inline double denormalize_target(const NormStats& stats, int line, double y_norm) {
  return y_norm * (stats.target_max[line] - stats.target_min[line]) + stats.target_min[line];
}

/// Row i of `y_norm` belongs to line i.
inline Mat denormalize_target(const NormStats& stats, const Mat& y_norm) {
  Mat out = y_norm;
  for (int i = 0; i < out.rows; ++i)
    for (int t = 0; t < out.cols; ++t) out(i, t) = denormalize_target(stats, i, out(i, t));
  return out;
}

inline double normalize_target(const NormStats& stats, int line, double y) {
  return (y - stats.target_min[line]) / (stats.target_max[line] - stats.target_min[line]);
}

inline nlohmann::json dataset_manifest(const WindowedDataset& ds, int days) {
  nlohmann::json j;
  j["schema"] = {{"n_v", ds.schema.node_feature_dim},
                 {"n_e", ds.schema.edge_feature_dim},
                 {"total_dim", ds.schema.total_dim()},
                 {"feature_names", full_feature_names()},
                 {"hash", feature_schema_hash()}};
  j["n_lines"] = ds.n_lines;
  j["line_ids"] = ds.line_ids;
  j["hours"] = ds.hours;
  j["days"] = days;
  char date[16];
  std::snprintf(date, sizeof(date), "%04d-%02u-%02u", ds.start_date.year, ds.start_date.month, ds.start_date.day);
  j["start_date"] = date;
  j["windows"] = {{"history_hours", kHistoryHours}, {"horizon_hours", kHorizonHours},
                  {"stride_hours", kWindowStride},  {"train_starts", ds.train_starts},
                  {"test_starts", ds.test_starts}};
  j["normalization"] = {{"feature_mean", ds.stats.feature_mean},
                        {"feature_std", ds.stats.feature_std},
                        {"target_min", ds.stats.target_min},
                        {"target_max", ds.stats.target_max}};
  return j;
}

}  // namespace dlr
