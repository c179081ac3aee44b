#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qkdlink/qkdlink.hpp"

namespace qkdtest {

using namespace qkdlink;

inline std::string source_path(const std::string& rel) { return std::string(QKDLINK_SOURCE_DIR) + "/" + rel; }

/// Random but valid parameter set for property tests.
inline SystemParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  auto log_range = [&](double lo, double hi) { return std::exp(range(std::log(lo), std::log(hi))); };
  SystemParams p;
  p.source.pair_rate = log_range(1e5, 2e8);
  p.source.visibility = range(0.8, 1.0);
  for (DetectorParams* d : {&p.detector_space, &p.detector_ground}) {
    d->efficiency = range(0.05, 0.6);
    d->dark_cps = log_range(10.0, 2e5);
    d->dead_time_ns = range(0.0, 200.0);
    d->jitter_ps = range(20.0, 1000.0);
    d->afterpulse_prob = range(0.0, 0.2);
  }
  p.link.background_cps = log_range(1.0, 1e5);
  p.link.pointing_jitter_urad = range(0.0, 10.0);
  p.link.polarization_error = range(0.0, 0.03);
  p.protocol.tau_c_ns = range(0.2, 5.0);
  p.orbit.max_elevation_deg = range(20.0, 90.0);
  return p;
}

// ---------------------------------------------------------------------------
// Monte Carlo presets

struct McPreset {
  std::string name;
  SystemParams params;
  LossProfile profile;
  double duration_s = 1.0;
  std::uint64_t seed = 1;
  ClockModel clock;
};

inline SystemParams lab_params() {
  SystemParams p;
  p.source.pair_rate = 2e5;
  p.detector_space.dark_cps = 500.0;
  p.detector_ground.dark_cps = 500.0;
  p.link.background_cps = 1300.0;
  return p;
}

inline std::vector<McPreset> mc_presets() {
  std::vector<McPreset> v;
  {
    McPreset m{"baseline", lab_params(), LossProfile::constant(10.0), 2.0, 11, {}};
    v.push_back(m);
  }
  {
    McPreset m{"space_dark_100k", lab_params(), LossProfile::constant(6.0), 1.0, 12, {}};
    m.params.detector_space.dark_cps = 1e5;
    v.push_back(m);
  }
  {
    McPreset m{"long_dead_time", lab_params(), LossProfile::constant(3.0), 1.0, 13, {}};
    m.params.source.pair_rate = 1e6;
    m.params.detector_space.dead_time_ns = 1000.0;
    m.params.detector_ground.dead_time_ns = 1000.0;
    v.push_back(m);
  }
  {
    McPreset m{"afterpulsing", lab_params(), LossProfile::constant(3.0), 1.0, 14, {}};
    m.params.source.pair_rate = 8e5;
    m.params.detector_space.afterpulse_prob = 0.2;
    m.params.detector_ground.afterpulse_prob = 0.2;
    m.params.detector_space.dead_time_ns = 200.0;
    v.push_back(m);
  }
  {
    McPreset m{"wide_window_noisy", lab_params(), LossProfile::constant(12.0), 2.0, 15, {}};
    m.params.protocol.tau_c_ns = 5.0;
    m.params.link.background_cps = 5e4;
    m.params.detector_ground.dark_cps = 5000.0;
    v.push_back(m);
  }
  {
    McPreset m{"low_visibility", lab_params(), LossProfile::constant(5.0), 1.0, 16, {}};
    m.params.source.visibility = 0.9;
    m.params.link.polarization_error = 0.02;
    v.push_back(m);
  }
  {
    McPreset m{"large_jitter", lab_params(), LossProfile::constant(3.0), 1.0, 17, {}};
    m.params.detector_space.jitter_ps = 600.0;
    m.params.detector_ground.jitter_ps = 500.0;
    v.push_back(m);
  }
  {
    McPreset m{"fwhm_jitter_high_rate", lab_params(), LossProfile::constant(8.0), 0.5, 18, {}};
    m.params.source.pair_rate = 2e6;
    m.params.detector_space.jitter_is_fwhm = true;
    m.params.detector_ground.jitter_is_fwhm = true;
    m.params.protocol.tau_c_ns = 2.0;
    v.push_back(m);
  }
  {
    McPreset m{"loss_profile", lab_params(), LossProfile{{0.0, 0.5, 1.0, 1.5, 2.0}, {14.0, 8.0, 4.0, 8.0, 14.0}}, 2.5,
               19, {}};
    v.push_back(m);
  }
  {
    // Unit efficiency and no loss: every pair is a coincidence.
    McPreset m{"ideal_lossless", lab_params(), LossProfile::constant(0.0), 2.0, 20, {}};
    m.params.source.pair_rate = 1e5;
    m.params.detector_space.efficiency = 1.0;
    m.params.detector_ground.efficiency = 1.0;
    m.params.detector_space.dark_cps = 0.0;
    m.params.detector_ground.dark_cps = 0.0;
    m.params.link.background_cps = 0.0;
    m.params.detector_space.afterpulse_prob = 0.0;
    m.params.detector_ground.afterpulse_prob = 0.0;
    m.params.detector_space.dead_time_ns = 0.0;
    m.params.detector_ground.dead_time_ns = 0.0;
    v.push_back(m);
  }
  {
    McPreset m{"clock_offset_drift", lab_params(), LossProfile::constant(7.0), 1.0, 21, {3.7e8, 12.0, 0.5}};
    v.push_back(m);
  }
  return v;
}

struct McCheck {
  std::string quantity;
  double expected = 0.0;
  double observed = 0.0;
  double sigma = 0.0;

  double z() const { return sigma > 0.0 ? (observed - expected) / sigma : (observed == expected ? 0.0 : INFINITY); }
  bool within(double k) const { return std::abs(observed - expected) <= k * sigma; }
};

struct McOutcome {
  std::size_t events = 0;
  std::vector<McCheck> checks;
};

/// Simulates a preset (beacon off), corrects the ground stream with the true clock and
/// compares every tallied quantity with the analytic model.
inline McOutcome mc_compare(const McPreset& m) {
  BeaconParams off;
  off.enabled = false;
  const SimResult sim = simulate_scenario(m.params, m.profile, m.clock, off, m.duration_s, m.seed);
  const TimestampStream ground = exact_ground_correction(sim.ground, m.clock);
  const auto pairs = find_coincidences(sim.space, ground, m.params.protocol.tau_c_ns);
  const TruthTally t = tally_truth(sim, ground, pairs);
  const RatePoint e = expected_average(sim);
  const double T = m.duration_s;

  McOutcome out;
  out.events = sim.space.size() + sim.ground.size();
  auto count = [&](const char* q, double rate, std::size_t obs) {
    const double ex = rate * T;
    out.checks.push_back({q, ex, static_cast<double>(obs), std::sqrt(std::max(ex, 1.0))});
  };
  count("singles_space", e.singles_space_cps, t.singles_space);
  count("singles_ground", e.singles_ground_cps, t.singles_ground);
  count("coinc_true", e.coinc_true_cps, t.coinc_true);
  count("coinc_acc", e.coinc_acc_cps, t.coinc_acc);
  count("coinc_noise", e.coinc_noise_cps, t.coinc_noise);
  count("sifted", e.sifted_rate_cps, t.sifted);
  auto fraction = [&](const char* q, double ex, double obs, std::size_t n) {
    const double s = n > 0 ? std::sqrt(std::max(ex * (1.0 - ex), 1e-12) / static_cast<double>(n)) : 1.0;
    out.checks.push_back({q, ex, obs, s});
  };
  fraction("qber", e.qber, t.qber(), t.sifted);
  fraction("true_pair_error", true_pair_error(m.params), t.true_pair_error(), t.true_sifted);
  // Key rate from the observed sifted count and QBER; its sigma follows from the
  // two inputs above by first-order propagation.
  {
    const double f = m.params.protocol.ec_efficiency;
    const double q = t.qber();
    const double frac = asymptotic_key_fraction(q, f);
    const double ex = e.asym_key_rate_cps * T;
    const double obs = static_cast<double>(t.sifted) * frac;
    double dfrac = 0.0;
    if (frac > 0.0 && q > 0.0 && q < 0.5) dfrac = (1.0 + f) * std::log2((1.0 - q) / q);
    const double sq = t.sifted > 0 ? std::sqrt(q * (1.0 - q) / static_cast<double>(t.sifted)) : 0.0;
    const double s = std::hypot(frac * std::sqrt(std::max(ex, 1.0)), static_cast<double>(t.sifted) * dfrac * sq);
    out.checks.push_back({"asym_key_bits", ex, obs, std::max(s, 1.0)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sync scenario: 100 s, 1 ms initial offset, 3 ppm drift (300 µs accumulated),
// attenuated pass-shaped loss.

struct SyncScenario {
  SystemParams params;
  LossProfile profile;
  ClockModel clock{1e9, 3.0, 0.0};
  BeaconParams beacon;
  double duration_s = 100.0;
  std::uint64_t seed = 2024;
};

inline SyncScenario sync_scenario() {
  SyncScenario s;
  s.params.source.pair_rate = 2e4;
  s.params.detector_space.efficiency = 0.5;
  s.params.detector_ground.efficiency = 0.5;
  s.params.detector_space.dark_cps = 200.0;
  s.params.detector_ground.dark_cps = 200.0;
  s.params.link.background_cps = 200.0;
  s.beacon.rate_hz = 5e3;
  // Ideal-pass link loss compressed onto the run and offset to 3 dB at closest approach.
  const LossProfile pass = pass_loss_profile(SystemParams{});
  const double span = pass.t_s.back() + 1.0;
  double lmin = pass.loss_db.front();
  for (double l : pass.loss_db) lmin = std::min(lmin, l);
  s.profile = LossProfile{{}, {}};
  for (std::size_t i = 0; i < pass.t_s.size(); ++i) {
    const double t = pass.t_s[i] * s.duration_s / span;
    if (!s.profile.t_s.empty() && t <= s.profile.t_s.back()) continue;
    s.profile.t_s.push_back(t);
    s.profile.loss_db.push_back(pass.loss_db[i] - lmin + 3.0);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Telemetry synthesis

/// Correlation curves for idler settings H, V, D, A with visibility V, peak net
/// coincidences `peak` and a constant accidental floor. Poisson noise when rng given.
inline std::array<std::vector<CurvePoint>, 4> synth_curves(double vis, double peak, double acc, std::mt19937_64* rng,
                                                          int n_angles = 16) {
  std::array<std::vector<CurvePoint>, 4> out;
  const std::array<double, 4> idler{0.0, 90.0, 45.0, 135.0};
  for (std::size_t s = 0; s < 4; ++s) {
    for (int k = 0; k < n_angles; ++k) {
      const double th = 180.0 * k / n_angles;
      const double c = std::cos(deg2rad(th - idler[s]));
      const double net = peak * ((1.0 - vis) / 2.0 + vis * c * c);
      double counts = net + acc;
      if (rng != nullptr) counts = static_cast<double>(std::poisson_distribution<long long>(counts)(*rng));
      out[s].push_back({th, counts, acc});
    }
  }
  return out;
}

}  // namespace qkdtest
