#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qkdlink/clock.hpp"
#include "qkdlink/error.hpp"
#include "qkdlink/numeric.hpp"
#include "qkdlink/params.hpp"
#include "qkdlink/rate_model.hpp"
#include "qkdlink/timestamps.hpp"
#include "qkdlink/timesync.hpp"

namespace qkdlink {

/// Piecewise-constant channel loss: loss_db[i] holds from t_s[i] to t_s[i+1].
struct LossProfile {
  std::vector<double> t_s{0.0};
  std::vector<double> loss_db{0.0};

  static LossProfile constant(double loss) { return {{0.0}, {loss}}; }

  double at(double t) const {
    auto it = std::upper_bound(t_s.begin(), t_s.end(), t);
    const auto i = it == t_s.begin() ? 0 : static_cast<std::size_t>(it - t_s.begin()) - 1;
    return loss_db[i];
  }
};

inline void validate(const LossProfile& lp) {
  if (lp.t_s.empty() || lp.t_s.size() != lp.loss_db.size())
    throw ValidationError("loss profile: times and losses must be non-empty and of equal length");
  if (lp.t_s.front() != 0.0) throw ValidationError("loss profile: first interval must start at 0");
  for (std::size_t i = 0; i < lp.t_s.size(); ++i) {
    if (i > 0 && !(lp.t_s[i] > lp.t_s[i - 1])) throw ValidationError("loss profile: times must increase");
    if (!(lp.loss_db[i] >= 0.0) || !std::isfinite(lp.loss_db[i]))
      throw ValidationError("loss profile: loss must be finite and ≥ 0");
  }
}

enum class Origin : std::uint8_t { Pair, Dark, Background, Afterpulse, Beacon };

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::Pair: return "pair";
    case Origin::Dark: return "dark";
    case Origin::Background: return "background";
    case Origin::Afterpulse: return "afterpulse";
    case Origin::Beacon: return "beacon";
  }
  return "?";
}

struct TruthTag {
  std::int64_t pair_id = -1;  // shared by the two photons of one pair
  Origin origin = Origin::Pair;
  bool operator==(const TruthTag&) const = default;
};

struct SimInterval {
  double t0_s = 0.0;
  double t1_s = 0.0;
  RatePoint expected;
};

struct SimResult {
  double duration_s = 0.0;
  TimestampStream space;
  TimestampStream ground;  // ground clock
  std::vector<TruthTag> space_truth;
  std::vector<TruthTag> ground_truth;
  std::vector<SimInterval> intervals;
};

namespace detail {

struct RawEvent {
  double t_ps;
  std::uint8_t channel;
  std::uint8_t flags;
  TruthTag tag;
};

inline std::size_t poisson_count(std::mt19937_64& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  return static_cast<std::size_t>(std::poisson_distribution<long long>(mean)(rng));
}

/// Sorts, rounds to integer ps and applies per-detector dead time with afterpulsing.
/// Beacon-flagged events bypass the detector model.
inline void finish_side(std::vector<RawEvent>& ev, const DetectorParams& det, std::mt19937_64& rng,
                        TimestampStream& out, std::vector<TruthTag>& tags) {
  std::stable_sort(ev.begin(), ev.end(), [](const RawEvent& a, const RawEvent& b) { return a.t_ps < b.t_ps; });
  const auto dead = static_cast<std::int64_t>(std::llround(det.dead_time_ns * 1e3));
  std::bernoulli_distribution afterpulse(std::clamp(det.afterpulse_prob, 0.0, 1.0));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  struct Tagged {
    TimestampRecord rec;
    TruthTag tag;
  };
  std::vector<Tagged> kept;
  kept.reserve(ev.size() + ev.size() / 8);
  std::int64_t busy_until[kMaxChannels];
  std::fill(std::begin(busy_until), std::end(busy_until), INT64_MIN);
  for (const auto& e : ev) {
    if (e.t_ps < 0.0) continue;
    const auto t = static_cast<std::int64_t>(std::llround(e.t_ps));
    if ((e.flags & kFlagBeacon) != 0 || e.channel >= kChannelBeacon) {
      kept.push_back({{static_cast<std::uint64_t>(t), e.channel, e.flags}, e.tag});
      continue;
    }
    if (t < busy_until[e.channel]) continue;
    kept.push_back({{static_cast<std::uint64_t>(t), e.channel, e.flags}, e.tag});
    busy_until[e.channel] = t + dead;
    if (afterpulse(rng)) {
      // Release after a uniform hold-off in [0, dead), detector blind until then.
      const auto hold = static_cast<std::int64_t>(static_cast<double>(dead) * uni(rng));
      kept.push_back({{static_cast<std::uint64_t>(t + dead + hold), e.channel, 0}, {-1, Origin::Afterpulse}});
      busy_until[e.channel] = t + 2 * dead + hold;
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Tagged& a, const Tagged& b) { return a.rec.time_ps < b.rec.time_ps; });
  out.clear();
  tags.clear();
  out.reserve(kept.size());
  tags.reserve(kept.size());
  for (const auto& k : kept) {
    out.push_back(k.rec);
    tags.push_back(k.tag);
  }
}

}  // namespace detail

/// Seeded Monte Carlo of both time-tagger streams.
///
/// Pair emission is split into three independent Poisson processes per loss interval:
/// both photons detected, space photon only, ground photon only. Each side picks its
/// basis independently; same-basis pairs agree except with the true-pair error
/// probability. Dark counts (per detector) and ground background (split over the four
/// detectors) are Poisson. Ground times pass through the clock model before dead-time
/// culling. Beacon pulses give flagged clicks on all space channels and channel 4, and
/// a ground channel-4 click when at least one of the Poisson photons is detected.
inline SimResult simulate_scenario(const SystemParams& p, const LossProfile& profile, const ClockModel& clock,
                                   const BeaconParams& beacon, double duration_s, std::uint64_t seed) {
  validate(p);
  validate(profile);
  validate(beacon);
  if (!(duration_s > 0.0)) throw ValidationError("simulation duration must be > 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sig_s = p.detector_space.jitter_sigma_ps();
  const double sig_g = p.detector_ground.jitter_sigma_ps();
  const double q_true = true_pair_error(p);
  const double eta_s = p.detector_space.efficiency;
  const double B = p.source.pair_rate;

  SimResult res;
  res.duration_s = duration_s;
  std::vector<detail::RawEvent> sp, gr;  // ground entries carry true time until the clock step
  std::int64_t next_id = 0;
  auto rand_bit = [&] { return static_cast<int>(rng() >> 63); };

  for (std::size_t i = 0; i < profile.t_s.size() && profile.t_s[i] < duration_s; ++i) {
    const double t0 = profile.t_s[i];
    const double t1 = i + 1 < profile.t_s.size() ? std::min(profile.t_s[i + 1], duration_s) : duration_s;
    const double dt = t1 - t0;
    const double loss = profile.loss_db[i];
    res.intervals.push_back({t0, t1, rate_point(p, loss)});
    const double eta_g = p.detector_ground.efficiency * db_to_transmittance(loss);
    auto emit_time = [&] { return (t0 + dt * uni(rng)) * 1e12; };

    const std::size_t n_both = detail::poisson_count(rng, B * eta_s * eta_g * dt);
    for (std::size_t k = 0; k < n_both; ++k) {
      const double t = emit_time();
      const int bs = rand_bit(), bg = rand_bit(), os = rand_bit();
      int og = rand_bit();
      if (bs == bg) og = uni(rng) < q_true ? 1 - os : os;
      const TruthTag tag{next_id++, Origin::Pair};
      sp.push_back({t + sig_s * gauss(rng), static_cast<std::uint8_t>(2 * bs + os), 0, tag});
      gr.push_back({t + sig_g * gauss(rng), static_cast<std::uint8_t>(2 * bg + og), 0, tag});
    }
    const std::size_t n_space = detail::poisson_count(rng, B * eta_s * (1.0 - eta_g) * dt);
    for (std::size_t k = 0; k < n_space; ++k) {
      const double t = emit_time();
      const auto ch = static_cast<std::uint8_t>(rng() % 4);
      sp.push_back({t + sig_s * gauss(rng), ch, 0, {next_id++, Origin::Pair}});
    }
    const std::size_t n_ground = detail::poisson_count(rng, B * (1.0 - eta_s) * eta_g * dt);
    for (std::size_t k = 0; k < n_ground; ++k) {
      const double t = emit_time();
      const auto ch = static_cast<std::uint8_t>(rng() % 4);
      gr.push_back({t + sig_g * gauss(rng), ch, 0, {next_id++, Origin::Pair}});
    }
  }

  // Noise, per detector.
  for (std::uint8_t ch = 0; ch < 4; ++ch) {
    const std::size_t n = detail::poisson_count(rng, p.detector_space.dark_cps * duration_s);
    for (std::size_t k = 0; k < n; ++k) sp.push_back({duration_s * 1e12 * uni(rng), ch, 0, {-1, Origin::Dark}});
  }
  for (std::uint8_t ch = 0; ch < 4; ++ch) {
    const std::size_t n = detail::poisson_count(rng, p.detector_ground.dark_cps * duration_s);
    for (std::size_t k = 0; k < n; ++k) gr.push_back({duration_s * 1e12 * uni(rng), ch, 0, {-1, Origin::Dark}});
  }
  {
    const std::size_t n = detail::poisson_count(rng, p.link.background_cps * duration_s);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = duration_s * 1e12 * uni(rng);
      gr.push_back({t, static_cast<std::uint8_t>(rng() % 4), 0, {-1, Origin::Background}});
    }
  }

  if (beacon.enabled) {
    const double period = beacon.period_ps();
    const double width = beacon.pulse_width_ns * 1e3;
    const double nbar = beacon.photons_detected_per_pulse_ground;
    const double p_detect = -std::expm1(-nbar);
    std::poisson_distribution<int> photons(nbar > 0.0 ? nbar : 1.0);
    for (double t = period / 2.0; t < duration_s * 1e12; t += period) {
      for (std::uint8_t ch = 0; ch <= kChannelBeacon; ++ch) sp.push_back({t, ch, kFlagBeacon, {-1, Origin::Beacon}});
      if (!(nbar > 0.0) || uni(rng) >= p_detect) continue;
      int k = 0;
      while (k < 1) k = photons(rng);  // conditional on a detection
      double first = width;
      for (int j = 0; j < k; ++j) first = std::min(first, width * uni(rng));
      gr.push_back({t + first + sig_g * gauss(rng), kChannelBeacon, kFlagBeacon, {-1, Origin::Beacon}});
    }
  }

  for (auto& e : gr) e.t_ps = clock.to_ground(e.t_ps);
  detail::finish_side(sp, p.detector_space, rng, res.space, res.space_truth);
  detail::finish_side(gr, p.detector_ground, rng, res.ground, res.ground_truth);
  return res;
}

inline SimResult simulate_scenario(const SystemParams& p, double loss_db, const ClockModel& clock,
                                   const BeaconParams& beacon, double duration_s, std::uint64_t seed) {
  return simulate_scenario(p, LossProfile::constant(loss_db), clock, beacon, duration_s, seed);
}

/// Sidecar CSV of truth tags, one row per record of both streams.
inline void write_truth_csv(std::ostream& os, const SimResult& r) {
  os << "side,index,time_ps,channel,origin,pair_id\n";
  auto dump = [&](std::string_view side, const TimestampStream& s, const std::vector<TruthTag>& tags) {
    for (std::size_t i = 0; i < s.size(); ++i)
      os << side << ',' << i << ',' << s[i].time_ps << ',' << int{s[i].channel} << ',' << to_string(tags[i].origin)
         << ',' << tags[i].pair_id << '\n';
  };
  dump("space", r.space, r.space_truth);
  dump("ground", r.ground, r.ground_truth);
}

inline void write_truth_csv(const std::string& path, const SimResult& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  write_truth_csv(f, r);
}

/// Counts from a simulated run, classified with the truth tags.
struct TruthTally {
  double duration_s = 0.0;
  std::size_t singles_space = 0;  // photon channels only
  std::size_t singles_ground = 0;
  std::size_t coinc_true = 0;
  std::size_t coinc_acc = 0;    // two pair photons from different pairs
  std::size_t coinc_noise = 0;  // at least one dark, background or afterpulse click
  std::size_t sifted = 0;
  std::size_t sifted_errors = 0;
  std::size_t true_sifted = 0;
  std::size_t true_sifted_errors = 0;

  std::size_t coinc_total() const { return coinc_true + coinc_acc + coinc_noise; }
  double qber() const { return sifted > 0 ? static_cast<double>(sifted_errors) / static_cast<double>(sifted) : 0.0; }
  double true_pair_error() const {
    return true_sifted > 0 ? static_cast<double>(true_sifted_errors) / static_cast<double>(true_sifted) : 0.0;
  }
};

/// Tallies a run whose ground stream has been mapped onto the space timebase with
/// the exact clock (records keep their index, so truth tags stay aligned).
inline TruthTally tally_truth(const SimResult& r, std::span<const TimestampRecord> ground_corrected,
                              std::span<const Coincidence> pairs, const CorrelationConvention& conv = {}) {
  TruthTally t;
  t.duration_s = r.duration_s;
  for (const auto& e : r.space) t.singles_space += e.is_photon() ? 1 : 0;
  for (const auto& e : ground_corrected) t.singles_ground += e.is_photon() ? 1 : 0;
  for (const auto& c : pairs) {
    const TruthTag& a = r.space_truth[c.space_index];
    const TruthTag& b = r.ground_truth[c.ground_index];
    const bool is_true = a.pair_id >= 0 && a.pair_id == b.pair_id;
    if (is_true) {
      ++t.coinc_true;
    } else if (a.origin == Origin::Pair && b.origin == Origin::Pair) {
      ++t.coinc_acc;
    } else {
      ++t.coinc_noise;
    }
    const auto& sa = r.space[c.space_index];
    const auto& gb = ground_corrected[c.ground_index];
    if (sa.basis() != gb.basis()) continue;
    const bool err = conv.is_error(sa.basis(), sa.outcome(), gb.outcome());
    ++t.sifted;
    t.sifted_errors += err ? 1 : 0;
    if (is_true) {
      ++t.true_sifted;
      t.true_sifted_errors += err ? 1 : 0;
    }
  }
  return t;
}

/// Maps the ground stream onto the space timebase with a known clock, keeping every
/// record (and so the truth-tag alignment).
inline TimestampStream exact_ground_correction(std::span<const TimestampRecord> ground, const ClockModel& clock) {
  TimestampStream out(ground.begin(), ground.end());
  for (auto& r : out) {
    const double t = clock.to_space(static_cast<double>(r.time_ps));
    r.time_ps = static_cast<std::uint64_t>(std::llround(std::max(0.0, t)));
  }
  for (std::size_t k = 1; k < out.size(); ++k)
    if (out[k].time_ps < out[k - 1].time_ps) out[k].time_ps = out[k - 1].time_ps;
  return out;
}

/// Duration-weighted analytic expectation over the simulated intervals.
inline RatePoint expected_average(const SimResult& r) {
  RatePoint avg;
  double total = 0.0, errors = 0.0;
  for (const auto& iv : r.intervals) {
    const double w = (iv.t1_s - iv.t0_s) / r.duration_s;
    avg.singles_space_cps += w * iv.expected.singles_space_cps;
    avg.singles_ground_cps += w * iv.expected.singles_ground_cps;
    avg.coinc_true_cps += w * iv.expected.coinc_true_cps;
    avg.coinc_acc_cps += w * iv.expected.coinc_acc_cps;
    avg.coinc_noise_cps += w * iv.expected.coinc_noise_cps;
    avg.sifted_rate_cps += w * iv.expected.sifted_rate_cps;
    avg.asym_key_rate_cps += w * iv.expected.asym_key_rate_cps;
    avg.mean_pairs_per_window += w * iv.expected.mean_pairs_per_window;
    total += w * iv.expected.coinc_total_cps();
    errors += w * iv.expected.coinc_total_cps() * iv.expected.qber;
  }
  avg.qber = total > 0.0 ? errors / total : 0.5;
  return avg;
}

}  // namespace qkdlink
