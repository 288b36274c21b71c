#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlr {

/// Conductor constants for the steady-state heat balance. Defaults are a
/// Drake-class ACSR conductor at a 100 C maximum operating temperature.
struct ConductorParams {
  double diameter_m = 0.0281;
  double resistance_ohm_per_m = 9.39e-5;  // AC resistance at max_conductor_temp_c
  double emissivity = 0.8;
  double absorptivity = 0.8;
  double max_conductor_temp_c = 100.0;

  void validate() const {
    if (diameter_m <= 0 || resistance_ohm_per_m <= 0) throw std::invalid_argument("conductor: positive geometry/resistance required");
    if (emissivity <= 0 || emissivity > 1) throw std::invalid_argument("conductor: emissivity in (0,1]");
    if (absorptivity <= 0 || absorptivity > 1) throw std::invalid_argument("conductor: absorptivity in (0,1]");
    if (max_conductor_temp_c <= 0) throw std::invalid_argument("conductor: positive max temperature required");
  }
};

struct WeatherSample {
  double ambient_temp_c = 20.0;
  double wind_speed_ms = 1.0;     // >= 0
  double wind_direction_deg = 0;  // [0, 360)
  double solar_wm2 = 0.0;         // >= 0
};

namespace heat {

// Steady-state heat-balance constant set (SI units, sea level). One pinned
// formula family for the whole project:
//  - forced convection: larger of the low/high Reynolds correlations, scaled
//    by the wind-direction factor K_angle
//  - natural convection floor at low wind
//  - gray-body radiative cooling
//  - flat-plate solar gain: absorptivity * measured irradiance * diameter

inline double air_viscosity(double t_film_c) {
  return 1.458e-6 * std::pow(t_film_c + 273.0, 1.5) / (t_film_c + 383.4);  // kg/(m*s)
}

inline double air_density(double t_film_c) {
  return 1.293 / (1.0 + 0.00367 * t_film_c);  // kg/m^3 at sea level
}

inline double air_conductivity(double t_film_c) {
  return 2.424e-2 + 7.477e-5 * t_film_c - 4.407e-9 * t_film_c * t_film_c;  // W/(m*C)
}

/// Wind attack angle relative to the conductor axis, folded into [0, 90]
/// degrees. 90 = perpendicular flow (strongest cooling).
inline double attack_angle_deg(double wind_direction_deg, double line_azimuth_deg) {
  double d = std::fmod(std::abs(wind_direction_deg - line_azimuth_deg), 180.0);
  return d > 90.0 ? 180.0 - d : d;
}

inline double wind_direction_factor(double attack_deg) {
  const double phi = attack_deg * 3.14159265358979323846 / 180.0;
  return 1.194 - std::cos(phi) + 0.194 * std::cos(2 * phi) + 0.368 * std::sin(2 * phi);
}

inline double forced_convection_wm(const ConductorParams& p, double t_ambient_c, double wind_ms, double attack_deg) {
  const double t_film = 0.5 * (p.max_conductor_temp_c + t_ambient_c);
  const double dt = p.max_conductor_temp_c - t_ambient_c;
  const double re = p.diameter_m * air_density(t_film) * wind_ms / air_viscosity(t_film);
  const double ka = wind_direction_factor(attack_deg);
  const double kf = air_conductivity(t_film);
  const double low = ka * (1.01 + 1.35 * std::pow(re, 0.52)) * kf * dt;
  const double high = ka * 0.754 * std::pow(re, 0.6) * kf * dt;
  return std::max(low, high);
}

inline double natural_convection_wm(const ConductorParams& p, double t_ambient_c) {
  const double t_film = 0.5 * (p.max_conductor_temp_c + t_ambient_c);
  const double dt = p.max_conductor_temp_c - t_ambient_c;
  return 3.645 * std::sqrt(air_density(t_film)) * std::pow(p.diameter_m, 0.75) * std::pow(dt, 1.25);
}

inline double radiative_cooling_wm(const ConductorParams& p, double t_ambient_c) {
  const double tc = (p.max_conductor_temp_c + 273.0) / 100.0;
  const double ta = (t_ambient_c + 273.0) / 100.0;
  return 17.8 * p.diameter_m * p.emissivity * (tc * tc * tc * tc - ta * ta * ta * ta);
}

inline double solar_heating_wm(const ConductorParams& p, double solar_wm2) {
  return p.absorptivity * solar_wm2 * p.diameter_m;
}

}  // namespace heat

/// Ampacity: the steady-state current (A) at which conductor heat gain
/// balances heat loss at the maximum allowed conductor temperature,
///   I = sqrt(max(0, q_c + q_r - q_s) / R(T_max)),
/// with q_c the larger of forced and natural convective cooling.
/// Throws when ambient temperature reaches the conductor limit.
inline double ampacity(const ConductorParams& p, const WeatherSample& w, double line_azimuth_deg) {
  p.validate();
  if (w.wind_speed_ms < 0) throw std::invalid_argument("ampacity: negative wind speed");
  if (w.solar_wm2 < 0) throw std::invalid_argument("ampacity: negative solar radiation");
  if (w.ambient_temp_c >= p.max_conductor_temp_c)
    throw std::invalid_argument("ampacity: ambient " + std::to_string(w.ambient_temp_c) +
                                " C at or above conductor limit " + std::to_string(p.max_conductor_temp_c) + " C");
  const double attack = heat::attack_angle_deg(w.wind_direction_deg, line_azimuth_deg);
  const double qc = std::max(heat::forced_convection_wm(p, w.ambient_temp_c, w.wind_speed_ms, attack),
                             heat::natural_convection_wm(p, w.ambient_temp_c));
  const double qr = heat::radiative_cooling_wm(p, w.ambient_temp_c);
  const double qs = heat::solar_heating_wm(p, w.solar_wm2);
  const double net = qc + qr - qs;
  return std::sqrt(std::max(0.0, net) / p.resistance_ohm_per_m);
}

/// Elementwise ampacity over an hourly weather series; length preserved.
inline std::vector<double> dlr_series(const ConductorParams& p, const std::vector<WeatherSample>& weather,
                                      double line_azimuth_deg) {
  std::vector<double> out;
  out.reserve(weather.size());
  for (const auto& w : weather) out.push_back(ampacity(p, w, line_azimuth_deg));
  return out;
}

}  // namespace dlr
