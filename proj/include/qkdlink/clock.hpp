#pragma once

#include <cmath>

#include "qkdlink/error.hpp"

namespace qkdlink {

/// Ground clock reading as a function of true (space-clock) time:
///   ground = t + offset + drift·t + ½·rate·t²   (drift in ppm, rate in ppm/s).
struct ClockModel {
  double offset_ps = 0.0;
  double drift_ppm = 0.0;
  double drift_rate_ppm_per_s = 0.0;

  /// Clock error (ps) at true time t_ps.
  double error_ps(double t_ps) const {
    const double t_s = t_ps * 1e-12;
    return offset_ps + drift_ppm * 1e-6 * t_ps + 0.5 * drift_rate_ppm_per_s * 1e-6 * t_s * t_ps;
  }
  double to_ground(double t_ps) const { return t_ps + error_ps(t_ps); }

  /// Inverse map, ground reading to true time (fixed point; drift ≪ 1).
  double to_space(double ground_ps) const {
    double t = ground_ps - offset_ps;
    for (int i = 0; i < 4; ++i) t = ground_ps - error_ps(t);
    return t;
  }
};

struct BeaconParams {
  bool enabled = true;
  double rate_hz = 10e3;
  double pulse_width_ns = 5.0;
  double photons_detected_per_pulse_ground = 10.0;  // Poisson mean

  double period_ps() const { return 1e12 / rate_hz; }
};

/// Mean arrival of the first detected photon after the pulse start, for a uniform
/// pulse and a Poisson photon number conditioned on at least one detection:
/// w · E[1/(K+1) | K ≥ 1].
inline double first_photon_delay_ps(const BeaconParams& b) {
  const double w = b.pulse_width_ns * 1e3;
  const double nbar = b.photons_detected_per_pulse_ground;
  if (!(nbar > 0.0)) return w / 2.0;
  double pk = std::exp(-nbar), sum = 0.0, norm = 0.0;
  const int kmax = static_cast<int>(nbar + 12.0 * std::sqrt(nbar) + 30.0);
  for (int k = 1; k <= kmax; ++k) {
    pk *= nbar / k;
    sum += pk / (k + 1);
    norm += pk;
  }
  return w * sum / norm;
}

inline void validate(const BeaconParams& b) {
  if (!b.enabled) return;
  if (!(b.rate_hz >= 1e3 && b.rate_hz <= 5e4)) throw ValidationError("beacon.rate_hz ∉ [1000,50000]");
  if (!(b.pulse_width_ns >= 0.0)) throw ValidationError("beacon.pulse_width_ns ∉ [0,∞)");
  if (!(b.photons_detected_per_pulse_ground >= 0.0))
    throw ValidationError("beacon.photons_detected_per_pulse_ground ∉ [0,∞)");
}

}  // namespace qkdlink
