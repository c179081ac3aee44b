#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qkdlink/error.hpp"
#include "qkdlink/numeric.hpp"
#include "qkdlink/params.hpp"

namespace qkdlink {

struct PassSample {
  double t_s = 0.0;  // relative to closest approach
  double elevation_deg = 0.0;
  double slant_range_km = 0.0;
};

/// Line-of-sight distance to a satellite at the given elevation on a spherical Earth.
inline double slant_range(double elevation_deg, const OrbitParams& orbit) {
  const double re = orbit.earth_radius_km;
  const double h = orbit.altitude_km;
  const double s = std::sin(deg2rad(elevation_deg));
  return std::sqrt(re * re * s * s + 2.0 * re * h + h * h) - re * s;
}

/// Earth central angle (rad) between the ground station and the sub-satellite point
/// when the satellite is seen at `elevation_deg`.
inline double central_angle(double elevation_deg, const OrbitParams& orbit) {
  const double el = deg2rad(elevation_deg);
  const double r = orbit.earth_radius_km + orbit.altitude_km;
  return std::numbers::pi / 2.0 - el - std::asin(orbit.earth_radius_km * std::cos(el) / r);
}

/// Inverse of central_angle.
inline double elevation_from_central_angle(double gamma_rad, const OrbitParams& orbit) {
  const double r = orbit.earth_radius_km + orbit.altitude_km;
  return rad2deg(std::atan2(std::cos(gamma_rad) - orbit.earth_radius_km / r, std::sin(gamma_rad)));
}

inline double orbital_rate(const OrbitParams& orbit) {
  const double r = orbit.earth_radius_km + orbit.altitude_km;
  return std::sqrt(orbit.gm_km3_s2 / (r * r * r));
}

/// Samples of one pass at uniform sample_dt_s, symmetric about closest approach,
/// covering every instant with elevation ≥ min_elevation_deg.
///
/// Circular orbit over a non-rotating spherical Earth. A pass with maximum elevation
/// below 90° has the ground station offset from the ground track by the central angle
/// beta = central_angle(max_elevation). With the along-track angle alpha = omega t the
/// spherical right triangle gives cos(gamma) = cos(alpha) cos(beta).
inline std::vector<PassSample> pass_geometry(const OrbitParams& orbit) {
  if (!(orbit.altitude_km > 0.0)) throw ValidationError("degenerate orbit: orbit.altitude_km must be > 0");
  if (!(orbit.sample_dt_s > 0.0)) throw ValidationError("orbit.sample_dt_s must be > 0");
  if (orbit.max_elevation_deg < orbit.min_elevation_deg || orbit.min_elevation_deg < 0.0 || orbit.max_elevation_deg > 90.0)
    throw ValidationError("pass requires 0 ≤ min_elevation ≤ max_elevation ≤ 90");

  const double omega = orbital_rate(orbit);
  const double beta = central_angle(orbit.max_elevation_deg, orbit);
  const double cos_beta = std::cos(beta);

  auto sample_at = [&](double t) {
    const double gamma = std::acos(std::clamp(std::cos(omega * t) * cos_beta, -1.0, 1.0));
    PassSample s;
    s.t_s = t;
    s.elevation_deg = std::min(elevation_from_central_angle(gamma, orbit), orbit.max_elevation_deg);
    s.slant_range_km = slant_range(s.elevation_deg, orbit);
    return s;
  };

  std::vector<PassSample> half;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * orbit.sample_dt_s;
    PassSample s = sample_at(t);
    if (s.elevation_deg < orbit.min_elevation_deg && k > 0) break;
    if (omega * t > std::numbers::pi) break;
    half.push_back(s);
  }
  std::vector<PassSample> out;
  out.reserve(2 * half.size() - 1);
  for (auto it = half.rbegin(); it != half.rend() - 1; ++it) {
    PassSample s = *it;
    s.t_s = -s.t_s;
    out.push_back(s);
  }
  out.insert(out.end(), half.begin(), half.end());
  return out;
}

}  // namespace qkdlink
