#pragma once

#include <cmath>
#include <stdexcept>

#include "qkdlink/numeric.hpp"
#include "qkdlink/params.hpp"

namespace qkdlink {

enum class Side { Space, Ground };

inline constexpr int kPolarizationDetectors = 4;

struct RatePoint {
  double loss_db = 0.0;
  double singles_space_cps = 0.0;
  double singles_ground_cps = 0.0;
  double coinc_true_cps = 0.0;
  double coinc_acc_cps = 0.0;
  double coinc_noise_cps = 0.0;
  double qber = 0.0;
  double sifted_rate_cps = 0.0;
  double asym_key_rate_cps = 0.0;
  double mean_pairs_per_window = 0.0;

  double coinc_total_cps() const { return coinc_true_cps + coinc_acc_cps + coinc_noise_cps; }
};

/// Count rates seen by one side's four polarization detectors.
struct DetectorResponse {
  double arrival_cps = 0.0;  // before dead time, all detectors
  double measured_cps = 0.0;
  double signal_cps = 0.0;   // measured clicks caused by pair photons
  double survival = 1.0;     // probability an arriving photon is registered
};

/// Non-paralyzable detector with afterpulsing. With probability p a primary click is
/// followed by an afterpulse after the dead time plus a uniform hold-off in [0, t)
/// (detector blind meanwhile), which holds the detector for a further dead time. For
/// Poisson arrivals at rate r the renewal cycle gives
///   measured = r (1+p) / (1 + r t (1 + 1.5 p)),   survival = 1 / (1 + r t (1 + 1.5 p)).
inline DetectorResponse detector_response(double photon_cps, double noise_cps, const DetectorParams& det) {
  const double per_det = (photon_cps + noise_cps) / kPolarizationDetectors;
  const double t = det.dead_time_ns * 1e-9;
  const double p = det.afterpulse_prob;
  DetectorResponse r;
  r.arrival_cps = photon_cps + noise_cps;
  r.survival = 1.0 / (1.0 + per_det * t * (1.0 + 1.5 * p));
  r.measured_cps = r.arrival_cps * (1.0 + p) * r.survival;
  r.signal_cps = photon_cps * r.survival;
  return r;
}

/// Transmittance of the downlinked arm for a given channel loss.
inline double ground_photon_cps(const SystemParams& p, double loss_db) {
  return p.source.pair_rate * p.detector_ground.efficiency * db_to_transmittance(loss_db);
}

inline DetectorResponse side_response(const SystemParams& p, double loss_db, Side side) {
  if (side == Side::Space) {
    DetectorResponse r = detector_response(p.source.pair_rate * p.detector_space.efficiency,
                                           kPolarizationDetectors * p.detector_space.dark_cps, p.detector_space);
    const double cap = p.source.space_singles_cap_cps;
    if (cap > 0.0 && r.measured_cps > cap) {
      // Time-tagger saturation drops events uniformly.
      const double k = cap / r.measured_cps;
      r.measured_cps *= k;
      r.signal_cps *= k;
      r.survival *= k;
    }
    return r;
  }
  return detector_response(ground_photon_cps(p, loss_db),
                           kPolarizationDetectors * p.detector_ground.dark_cps + p.link.background_cps,
                           p.detector_ground);
}

/// Measured singles rate of one side (all four polarization detectors). The space
/// side does not see the link.
inline double singles(const SystemParams& p, double loss_db, Side side) {
  return side_response(p, loss_db, side).measured_cps;
}

/// Fraction of true pairs whose space/ground timing difference falls inside the
/// coincidence window, for Gaussian detector jitter on both ends.
inline double window_capture(const SystemParams& p) {
  const double s1 = p.detector_space.jitter_sigma_ps();
  const double s2 = p.detector_ground.jitter_sigma_ps();
  const double sigma_ps = std::hypot(s1, s2);
  if (sigma_ps <= 0.0) return 1.0;
  return std::erf(p.protocol.tau_c_ns * 1e3 / 2.0 / (std::sqrt(2.0) * sigma_ps));
}

struct Coincidences {
  double true_cps = 0.0;
  double acc_cps = 0.0;    // uncorrelated photon-photon pairings
  double noise_cps = 0.0;  // pairings involving dark, background or afterpulse clicks
};

inline Coincidences coincidences(const SystemParams& p, double loss_db) {
  const DetectorResponse a = side_response(p, loss_db, Side::Space);
  const DetectorResponse b = side_response(p, loss_db, Side::Ground);
  const double tau = p.protocol.tau_c_ns * 1e-9;
  Coincidences c;
  c.true_cps = p.source.pair_rate * p.detector_space.efficiency * p.detector_ground.efficiency *
               db_to_transmittance(loss_db) * a.survival * b.survival * window_capture(p);
  c.acc_cps = a.signal_cps * b.signal_cps * tau;
  c.noise_cps = (a.measured_cps * b.measured_cps - a.signal_cps * b.signal_cps) * tau;
  return c;
}

/// Error probability of a true pair measured in matching bases.
inline double true_pair_error(const SystemParams& p) {
  const double q_src = (1.0 - p.source.visibility) / 2.0;
  const double e = p.link.polarization_error;
  return q_src + e - 2.0 * q_src * e;
}

/// QBER of the sifted coincidences. Accidental and noise pairings are wrong half the
/// time. Throws std::domain_error when there are no coincidences at all.
inline double qber(const SystemParams& p, double true_cps, double acc_cps, double noise_cps) {
  const double total = true_cps + acc_cps + noise_cps;
  if (!(total > 0.0)) throw std::domain_error("qber: no coincidences");
  return (true_pair_error(p) * true_cps + 0.5 * (acc_cps + noise_cps)) / total;
}

/// Secret-key fraction remaining after error correction (efficiency f) and privacy
/// amplification in the asymptotic limit.
inline double asymptotic_key_fraction(double q, double f) {
  const double h = binary_entropy(q);
  return std::max(0.0, 1.0 - f * h - h);
}

inline double asymptotic_key_rate(double sifted_cps, double q, double f) {
  if (!(q >= 0.0 && q <= 0.5)) throw std::domain_error("asymptotic_key_rate: qber outside [0, 0.5]");
  return sifted_cps * asymptotic_key_fraction(q, f);
}

inline RatePoint rate_point(const SystemParams& p, double loss_db) {
  RatePoint r;
  r.loss_db = loss_db;
  r.singles_space_cps = singles(p, loss_db, Side::Space);
  r.singles_ground_cps = singles(p, loss_db, Side::Ground);
  const Coincidences c = coincidences(p, loss_db);
  r.coinc_true_cps = c.true_cps;
  r.coinc_acc_cps = c.acc_cps;
  r.coinc_noise_cps = c.noise_cps;
  r.mean_pairs_per_window = p.source.pair_rate * p.protocol.tau_c_ns * 1e-9;
  const double total = r.coinc_total_cps();
  r.qber = total > 0.0 ? qber(p, c.true_cps, c.acc_cps, c.noise_cps) : 0.5;
  r.sifted_rate_cps = p.protocol.basis_factor * total;
  r.asym_key_rate_cps = asymptotic_key_rate(r.sifted_rate_cps, r.qber, p.protocol.ec_efficiency);
  return r;
}

}  // namespace qkdlink
