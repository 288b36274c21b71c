#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "dlr/calendar.hpp"
#include "dlr/grid.hpp"
#include "dlr/mat.hpp"
#include "dlr/thermal.hpp"

namespace dlr {

/// Hourly weather series for every bus of a grid, on one shared timeline.
struct WeatherField {
  Date start;
  int hours = 0;
  // Channel matrices are (hours x buses), bus columns in grid bus order.
  Mat temp_c;
  Mat wind_speed_ms;
  Mat wind_dir_deg;
  Mat solar_wm2;
};

struct WeatherGenParams {
  double noise_length_scale_km = 100.0;  // e-folding distance of cross-bus noise correlation
  double temp_base_c = 20.0;
  double temp_seasonal_amp = 12.0;
  double temp_diurnal_amp = 6.0;
  double temp_noise_sd = 3.0;
  double wind_base_ms = 4.0;
  double wind_noise_sd = 2.0;
  double solar_peak_wm2 = 900.0;
  double noise_ar1 = 0.9;  // hour-to-hour persistence of the noise fields
};

namespace detail {

/// One spatially correlated AR(1) noise field: each hour is a zero-mean unit
/// variance Gaussian vector over buses with Corr(i,j) = exp(-d_ij / ell),
/// persisted in time with coefficient rho.
class CorrelatedNoise {
 public:
  CorrelatedNoise(const Grid& grid, double length_scale_km, double rho, std::mt19937_64& rng)
      : rho_(rho), rng_(&rng), state_(static_cast<int>(grid.buses.size()), 1) {
    const int n = static_cast<int>(grid.buses.size());
    Mat cov(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double d = great_circle_km(grid.buses[i].lat, grid.buses[i].lon, grid.buses[j].lat, grid.buses[j].lon);
        cov(i, j) = std::exp(-d / length_scale_km);
      }
    chol_ = cholesky(cov);
    draw_into(state_);  // stationary start
  }

  /// Advances one hour and returns the per-bus noise vector (n x 1).
  const Mat& step() {
    Mat innov(state_.rows, 1);
    draw_into(innov);
    const double keep = rho_, fresh = std::sqrt(1.0 - rho_ * rho_);
    for (int i = 0; i < state_.rows; ++i) state_(i, 0) = keep * state_(i, 0) + fresh * innov(i, 0);
    return state_;
  }

 private:
  void draw_into(Mat& out) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat g(out.rows, 1);
    for (int i = 0; i < g.rows; ++i) g(i, 0) = gauss(*rng_);
    matmul_into(chol_, g, out);
  }

  double rho_;
  std::mt19937_64* rng_;
  Mat chol_;
  Mat state_;
};

}  // namespace detail

/// Synthetic hourly weather over the grid: seasonal + diurnal sinusoids per
/// channel plus spatially correlated noise whose cross-bus correlation
/// decays with great-circle distance. Deterministic given the seed.
/// Wind speed and solar radiation are clamped at zero; solar is exactly zero
/// at night. Requires at least 8 days (one forecasting window).
inline WeatherField generate_weather(const Grid& grid, int days, uint64_t seed, Date start = Date{2024, 1, 1},
                                     const WeatherGenParams& p = {}) {
  if (days < 8) throw std::invalid_argument("generate_weather: need >= 8 days");
  grid.validate();
  const int n = static_cast<int>(grid.buses.size());
  const int hours = days * 24;

  WeatherField wf;
  wf.start = start;
  wf.hours = hours;
  wf.temp_c = Mat(hours, n);
  wf.wind_speed_ms = Mat(hours, n);
  wf.wind_dir_deg = Mat(hours, n);
  wf.solar_wm2 = Mat(hours, n);

  std::mt19937_64 rng(seed);
  detail::CorrelatedNoise noise_temp(grid, p.noise_length_scale_km, p.noise_ar1, rng);
  detail::CorrelatedNoise noise_wind(grid, p.noise_length_scale_km, p.noise_ar1, rng);
  detail::CorrelatedNoise noise_dir(grid, p.noise_length_scale_km, p.noise_ar1, rng);
  detail::CorrelatedNoise noise_cloud(grid, p.noise_length_scale_km, p.noise_ar1, rng);

  double mean_lat = 0.0;
  for (const auto& b : grid.buses) mean_lat += b.lat;
  mean_lat /= std::max(1, n);

  const double two_pi = 2.0 * 3.14159265358979323846;
  const int start_doy = day_of_year(start);

  for (int t = 0; t < hours; ++t) {
    const double doy = start_doy + t / 24.0;
    const double seasonal = std::sin(two_pi * (doy - 80.0) / 365.25);  // peaks near the summer solstice
    const int hod = t % 24;
    const double diurnal_temp = std::sin(two_pi * (hod - 9) / 24.0);  // hottest mid-afternoon
    const double diurnal_wind = std::sin(two_pi * (hod - 8) / 24.0);
    // sin(pi) only lands near zero in floating point, so gate night on the integer hour.
    const bool daylight = hod > 6 && hod < 18;
    const double sun_elev = daylight ? std::sin(3.14159265358979323846 * (hod - 6) / 12.0) : 0.0;

    const Mat& nt = noise_temp.step();
    const Mat& nw = noise_wind.step();
    const Mat& nd = noise_dir.step();
    const Mat& nc = noise_cloud.step();

    for (int b = 0; b < n; ++b) {
      const double lat_adj = 0.7 * (mean_lat - grid.buses[b].lat);  // southern buses run warmer
      wf.temp_c(t, b) = p.temp_base_c + lat_adj + p.temp_seasonal_amp * seasonal + p.temp_diurnal_amp * diurnal_temp +
                        p.temp_noise_sd * nt(b, 0);
      wf.wind_speed_ms(t, b) =
          std::max(0.0, p.wind_base_ms - 1.0 * seasonal + 1.2 * diurnal_wind + p.wind_noise_sd * nw(b, 0));
      double dir = 170.0 + 50.0 * seasonal + 35.0 * nd(b, 0);
      dir = std::fmod(dir, 360.0);
      if (dir < 0) dir += 360.0;
      wf.wind_dir_deg(t, b) = dir;
      const double clear_sky = (p.solar_peak_wm2 + 250.0 * seasonal) * std::max(0.0, sun_elev);
      const double cloud = std::clamp(1.0 - 0.35 * std::abs(nc(b, 0)), 0.0, 1.0);
      wf.solar_wm2(t, b) = daylight ? clear_sky * cloud : 0.0;
    }
  }
  return wf;
}

inline WeatherSample weather_at(const WeatherField& wf, int hour, int bus_index) {
  return WeatherSample{wf.temp_c(hour, bus_index), wf.wind_speed_ms(hour, bus_index), wf.wind_dir_deg(hour, bus_index),
                       wf.solar_wm2(hour, bus_index)};
}

/// Random connected topology: buses scattered uniformly in a lat/lon box,
/// wired as a nearest-neighbor tree plus the shortest remaining candidate
/// edges until `n_lines` is reached. No self-loops or parallel lines by
/// construction. Deterministic given the seed.
inline Grid synthetic_grid(int n_buses, int n_lines, uint64_t seed, double lat_min = 29.0, double lat_max = 34.0,
                           double lon_min = -103.0, double lon_max = -95.0) {
  if (n_buses < 2) throw std::invalid_argument("synthetic_grid: need >= 2 buses");
  if (n_lines < n_buses - 1) throw std::invalid_argument("synthetic_grid: need >= buses-1 lines for connectivity");
  const long max_lines = static_cast<long>(n_buses) * (n_buses - 1) / 2;
  if (n_lines > max_lines) throw std::invalid_argument("synthetic_grid: more lines than bus pairs");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ulat(lat_min, lat_max), ulon(lon_min, lon_max);
  Grid g;
  for (int i = 0; i < n_buses; ++i) g.buses.push_back(Bus{i + 1, ulat(rng), ulon(rng)});

  auto dist = [&](int i, int j) {
    return great_circle_km(g.buses[i].lat, g.buses[i].lon, g.buses[j].lat, g.buses[j].lon);
  };

  std::set<std::pair<int, int>> used;
  LineId next_id = 1;
  auto add_line = [&](int i, int j) {
    auto key = std::minmax(i, j);
    used.insert(key);
    g.lines.push_back(Line{next_id++, g.buses[key.first].id, g.buses[key.second].id, dist(i, j)});
  };

  // nearest-neighbor spanning tree over the insertion order
  for (int i = 1; i < n_buses; ++i) {
    int best = 0;
    for (int j = 1; j < i; ++j)
      if (dist(i, j) < dist(i, best)) best = j;
    add_line(i, best);
  }

  // remaining lines: shortest unused pairs first
  std::vector<std::pair<double, std::pair<int, int>>> cands;
  for (int i = 0; i < n_buses; ++i)
    for (int j = i + 1; j < n_buses; ++j)
      if (!used.count({i, j})) cands.push_back({dist(i, j), {i, j}});
  std::sort(cands.begin(), cands.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first < b.first : a.second < b.second; });
  for (const auto& c : cands) {
    if (static_cast<int>(g.lines.size()) >= n_lines) break;
    add_line(c.second.first, c.second.second);
  }
  g.validate();
  return g;
}

}  // namespace dlr
