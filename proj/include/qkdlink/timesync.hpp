#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qkdlink/clock.hpp"
#include "qkdlink/error.hpp"
#include "qkdlink/numeric.hpp"
#include "qkdlink/timestamps.hpp"

namespace qkdlink {

// ---------------------------------------------------------------------------
// Coincidence finding

struct Coincidence {
  std::size_t space_index = 0;   // into the space stream
  std::size_t ground_index = 0;  // into the (corrected) ground stream
  std::int64_t dt_ps = 0;        // ground − space
};

/// Pairs photon events whose times differ by at most tau_c/2. Space events are taken
/// in time order and each claims the nearest unclaimed ground event inside its window
/// (earlier ground event on ties); every event is used at most once. Beacon-flagged
/// and channel ≥ 4 events are ignored.
inline std::vector<Coincidence> find_coincidences(std::span<const TimestampRecord> space,
                                                  std::span<const TimestampRecord> ground, double tau_c_ns) {
  std::vector<Coincidence> out;
  const double half = tau_c_ns * 1e3 / 2.0;
  std::vector<std::size_t> gidx;
  gidx.reserve(ground.size());
  for (std::size_t j = 0; j < ground.size(); ++j)
    if (ground[j].is_photon()) gidx.push_back(j);
  std::vector<bool> used(gidx.size(), false);

  std::size_t lo = 0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (!space[i].is_photon()) continue;
    const auto ts = static_cast<std::int64_t>(space[i].time_ps);
    while (lo < gidx.size() &&
           (used[lo] || static_cast<double>(static_cast<std::int64_t>(ground[gidx[lo]].time_ps) - ts) < -half))
      ++lo;
    std::size_t best = gidx.size();
    std::int64_t best_dt = 0;
    for (std::size_t k = lo; k < gidx.size(); ++k) {
      const std::int64_t dt = static_cast<std::int64_t>(ground[gidx[k]].time_ps) - ts;
      if (static_cast<double>(dt) > half) break;
      if (used[k] || static_cast<double>(dt) < -half) continue;
      if (best == gidx.size() || std::llabs(dt) < std::llabs(best_dt)) {
        best = k;
        best_dt = dt;
      }
    }
    if (best != gidx.size()) {
      used[best] = true;
      out.push_back({i, gidx[best], best_dt});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sifting

/// Expected outcome relation per basis for the distributed state. The default
/// (same outcome in H/V and in D/A) corresponds to |Φ+⟩.
struct CorrelationConvention {
  bool same_outcome_hv = true;
  bool same_outcome_da = true;

  bool is_error(int basis, int space_outcome, int ground_outcome) const {
    const bool same = space_outcome == ground_outcome;
    return (basis == 0 ? same_outcome_hv : same_outcome_da) ? !same : same;
  }
};

struct SiftReport {
  std::size_t n_coincidences = 0;
  std::size_t n_sifted = 0;
  std::size_t n_errors = 0;
  double qber_est = 0.0;
  double coincidence_rate_cps = 0.0;
};

/// Sifted key material, one bit per same-basis coincidence in time order.
struct SiftedKey {
  std::vector<std::uint8_t> space_bits;
  std::vector<std::uint8_t> ground_bits;
};

inline SiftReport sift_and_estimate(std::span<const Coincidence> pairs, std::span<const TimestampRecord> space,
                                    std::span<const TimestampRecord> ground, double duration_s,
                                    const CorrelationConvention& conv = {}, SiftedKey* key = nullptr) {
  SiftReport r;
  r.n_coincidences = pairs.size();
  for (const auto& c : pairs) {
    const auto& a = space[c.space_index];
    const auto& b = ground[c.ground_index];
    if (a.basis() != b.basis()) continue;
    ++r.n_sifted;
    if (conv.is_error(a.basis(), a.outcome(), b.outcome())) ++r.n_errors;
    if (key != nullptr) {
      key->space_bits.push_back(static_cast<std::uint8_t>(a.outcome()));
      key->ground_bits.push_back(static_cast<std::uint8_t>(b.outcome()));
    }
  }
  r.qber_est = r.n_sifted > 0 ? static_cast<double>(r.n_errors) / static_cast<double>(r.n_sifted) : 0.0;
  r.coincidence_rate_cps = duration_s > 0.0 ? static_cast<double>(r.n_coincidences) / duration_s : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Clock synchronization from beacon events

struct SyncOptions {
  double coarse_bin_ps = 1e6;      // 1 µs
  double fine_bin_ps = 1e3;        // 1 ns
  double coarse_span_s = 0.5;      // data used for the initial lock
  double segment_s = 1.0;          // tracking segment length
  double min_significance = 6.0;
  int fit_order = 2;               // 1: offset + drift, 2: adds drift rate
  double alias_span_s = 2.0;       // ground data used to resolve beacon-period ambiguity
  double probe_half_ps = 2000.0;   // photon coincidence half-window for alias scoring
  bool photon_refine = true;       // centre the photon coincidence peak
};

struct SyncSegment {
  double t_s = 0.0;  // space time of the segment centre
  double offset_ps = 0.0;
  std::size_t matches = 0;
};

struct SyncResult {
  ClockModel clock;  // ground = space + clock.error_ps(space)
  double offset_ps = 0.0;
  double drift_ppm = 0.0;
  double residual_rms_ps = 0.0;
  double correlation_peak_significance = 0.0;
  std::size_t beacon_matches = 0;
  long alias_shift = 0;               // beacon periods added to resolve the comb ambiguity
  double alias_significance = 0.0;
  double photon_peak_shift_ps = 0.0;  // applied by the photon refinement
  std::vector<SyncSegment> segments;
};

namespace detail {

inline std::vector<double> beacon_times(std::span<const TimestampRecord> s) {
  std::vector<double> out;
  for (const auto& r : s)
    if (r.channel == kChannelBeacon && r.is_beacon()) out.push_back(static_cast<double>(r.time_ps));
  return out;
}

inline std::vector<double> photon_times(std::span<const TimestampRecord> s) {
  std::vector<double> out;
  for (const auto& r : s)
    if (r.is_photon()) out.push_back(static_cast<double>(r.time_ps));
  return out;
}

/// Index of the element of sorted `v` nearest to x (v non-empty).
inline std::size_t nearest(const std::vector<double>& v, double x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end()) return v.size() - 1;
  if (it == v.begin()) return 0;
  const auto hi = static_cast<std::size_t>(it - v.begin());
  return (x - v[hi - 1] <= v[hi] - x) ? hi - 1 : hi;
}

inline double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Offset polynomial in seconds from t_ref: o(t) = c0 + c1 u + c2 u², u = (t − ref)·1e-12.
struct OffsetPoly {
  double ref_ps = 0.0;
  double c[3] = {0.0, 0.0, 0.0};

  double operator()(double t_ps) const {
    const double u = (t_ps - ref_ps) * 1e-12;
    return c[0] + u * (c[1] + u * c[2]);
  }
  /// Same relation with every match moved by `delta` space-clock ps (beacon alias):
  /// f(s) = this(s + delta) + delta.
  OffsetPoly aliased(double delta) const {
    OffsetPoly p = *this;
    p.ref_ps -= delta;
    p.c[0] += delta;
    return p;
  }

  ClockModel to_clock() const {
    // Expand about t = 0: o(t) = a + b t + c t², t in s.
    const double r = ref_ps * 1e-12;
    const double a = c[0] - c[1] * r + c[2] * r * r;
    const double b = c[1] - 2.0 * c[2] * r;
    ClockModel m;
    m.offset_ps = a;
    m.drift_ppm = b * 1e-6;                    // ps/s → ppm
    m.drift_rate_ppm_per_s = 2.0 * c[2] * 1e-6;
    return m;
  }
};

inline OffsetPoly fit_offsets(std::span<const double> t_ps, std::span<const double> off_ps, double ref_ps, int order,
                              double* rms) {
  OffsetPoly p;
  p.ref_ps = ref_ps;
  const std::size_t n = t_ps.size();
  if (order >= 2 && n >= 3) {
    const auto f = least_squares<3>(n, [&](std::size_t i) {
      const double u = (t_ps[i] - ref_ps) * 1e-12;
      return std::array{1.0, u, u * u};
    }, off_ps);
    p.c[0] = f.coef[0];
    p.c[1] = f.coef[1];
    p.c[2] = f.coef[2];
    *rms = std::sqrt(f.rss / static_cast<double>(n));
  } else if (n >= 2) {
    const auto f = least_squares<2>(n, [&](std::size_t i) { return std::array{1.0, (t_ps[i] - ref_ps) * 1e-12}; }, off_ps);
    p.c[0] = f.coef[0];
    p.c[1] = f.coef[1];
    *rms = std::sqrt(f.rss / static_cast<double>(n));
  } else {
    p.c[0] = n == 1 ? off_ps[0] : 0.0;
    *rms = 0.0;
  }
  return p;
}

}  // namespace detail

/// Recovers the ground↔space clock relation.
///
/// 1. Coarse lock: histogram of ground−space beacon time differences over
///    ±search_window in coarse bins on the first coarse_span_s, refined with fine bins
///    around the peak.
/// 2. Tracking: ground beacons are matched to the nearest predicted space beacon,
///    segment by segment, with the prediction extrapolated from earlier segments.
/// 3. Global least-squares fit of offset vs time over all matched beacons with
///    iterative outlier clipping.
/// 4. A periodic beacon only fixes the offset modulo its period. The alias inside the
///    search window is chosen by photon coincidence counts (or, without photons, by
///    beacon-sequence overlap).
/// 5. Optional photon refinement centres the true-coincidence peak.
inline SyncResult sync_clocks(std::span<const TimestampRecord> space, std::span<const TimestampRecord> ground,
                              const BeaconParams& beacon, double search_window_s, const SyncOptions& opt = {}) {
  using detail::nearest;
  const std::vector<double> sb = detail::beacon_times(space);
  const std::vector<double> gb = detail::beacon_times(ground);
  if (sb.size() < 2 || gb.size() < 2) throw SyncError("sync failed: no beacon events in one or both streams");
  const double window = search_window_s * 1e12;
  if (!(window > 0.0)) throw ValidationError("search window must be > 0");
  const double period = beacon.period_ps();

  SyncResult res;

  // 1. coarse histogram
  const double coarse_end = gb.front() + opt.coarse_span_s * 1e12;
  const auto nbins = static_cast<std::size_t>(std::ceil(2.0 * window / opt.coarse_bin_ps));
  std::vector<double> hist(std::max<std::size_t>(nbins, 1), 0.0);
  std::size_t n_coarse = 0;
  for (std::size_t i = 0; i < gb.size() && (gb[i] <= coarse_end || n_coarse < 50); ++i, ++n_coarse) {
    const double g = gb[i];
    auto it = std::lower_bound(sb.begin(), sb.end(), g - window);
    for (; it != sb.end() && *it <= g + window; ++it) {
      const double d = g - *it;
      auto b = static_cast<std::size_t>((d + window) / opt.coarse_bin_ps);
      if (b < hist.size()) hist[b] += 1.0;
    }
  }
  const auto peak_it = std::max_element(hist.begin(), hist.end());
  double mean = 0.0;
  for (double h : hist) mean += h;
  mean /= static_cast<double>(hist.size());
  res.correlation_peak_significance = (*peak_it - mean) / std::sqrt(mean + 1.0);
  if (*peak_it < 5.0 || res.correlation_peak_significance < opt.min_significance)
    throw SyncError("sync failed: correlation peak significance " + std::to_string(res.correlation_peak_significance) +
                    " below threshold");
  const double coarse = -window + (static_cast<double>(peak_it - hist.begin()) + 0.5) * opt.coarse_bin_ps;

  // fine bins around the coarse peak
  double start_offset = coarse;
  {
    const double lo = coarse - 2.0 * opt.coarse_bin_ps;
    const auto nf = static_cast<std::size_t>(std::ceil(4.0 * opt.coarse_bin_ps / opt.fine_bin_ps));
    std::vector<double> fine(nf, 0.0);
    const double fine_end = gb.front() + std::min(opt.coarse_span_s, 0.05) * 1e12;
    for (std::size_t i = 0; i < gb.size() && (gb[i] <= fine_end || i < 20); ++i) {
      auto it = std::lower_bound(sb.begin(), sb.end(), gb[i] - lo - 4.0 * opt.coarse_bin_ps);
      for (; it != sb.end() && *it <= gb[i] - lo; ++it) {
        const double d = gb[i] - *it - lo;
        if (d < 0.0) continue;
        auto b = static_cast<std::size_t>(d / opt.fine_bin_ps);
        if (b < fine.size()) fine[b] += 1.0;
      }
    }
    const auto fp = std::max_element(fine.begin(), fine.end());
    if (*fp > 0.0) start_offset = lo + (static_cast<double>(fp - fine.begin()) + 0.5) * opt.fine_bin_ps;
  }

  // 2. tracking
  std::vector<double> ms, md;  // matched space time, ground−space difference
  const double tol = std::min(period / 4.0, window);
  detail::OffsetPoly pred;
  pred.ref_ps = gb.front();
  pred.c[0] = start_offset;
  std::vector<double> seg_t, seg_o;
  std::size_t i = 0;
  while (i < gb.size()) {
    const double seg_end = gb[i] + opt.segment_s * 1e12;
    std::vector<double> seg_s, seg_d;
    for (; i < gb.size() && gb[i] < seg_end; ++i) {
      const double target = gb[i] - pred(gb[i]);
      const double s = sb[nearest(sb, target)];
      if (std::abs(s - target) <= tol) {
        seg_s.push_back(s);
        seg_d.push_back(gb[i] - s);
      }
    }
    if (seg_s.empty()) continue;
    ms.insert(ms.end(), seg_s.begin(), seg_s.end());
    md.insert(md.end(), seg_d.begin(), seg_d.end());
    SyncSegment seg{detail::median(seg_s) * 1e-12, detail::median(seg_d), seg_s.size()};
    res.segments.push_back(seg);
    seg_t.push_back(seg.t_s * 1e12);
    seg_o.push_back(seg.offset_ps);
    // Predict from the most recent segments (in ground time, offset changes slowly).
    const std::size_t keep = std::min<std::size_t>(seg_t.size(), 5);
    double rms_unused = 0.0;
    pred = detail::fit_offsets(std::span(seg_t).last(keep), std::span(seg_o).last(keep), seg_t.back(),
                               keep >= 2 ? 1 : 0, &rms_unused);
  }
  if (ms.size() < 2) throw SyncError("sync failed: beacon tracking found no matches");

  // 3. global fit with clipping
  const double ref = ms.front();
  double rms = 0.0;
  detail::OffsetPoly fit = detail::fit_offsets(ms, md, ref, opt.fit_order, &rms);
  for (int iter = 0; iter < 4; ++iter) {
    const double clip = std::max(5.0 * rms, 2000.0);
    std::vector<double> ks, kd;
    for (std::size_t k = 0; k < ms.size(); ++k)
      if (std::abs(md[k] - fit(ms[k])) <= clip) {
        ks.push_back(ms[k]);
        kd.push_back(md[k]);
      }
    if (ks.size() < 2) break;
    fit = detail::fit_offsets(ks, kd, ref, opt.fit_order, &rms);
    res.beacon_matches = ks.size();
  }
  res.residual_rms_ps = rms;
  fit.c[0] -= first_photon_delay_ps(beacon);

  // 4. alias resolution
  const std::vector<double> sp = detail::photon_times(space);
  auto offset_at_start = fit(ref);
  const long k_lo = static_cast<long>(std::ceil((-window - offset_at_start) / period));
  const long k_hi = static_cast<long>(std::floor((window - offset_at_start) / period));
  if (k_hi > k_lo) {
    std::vector<double> gp;
    const double alias_end = ground.empty() ? 0.0 : static_cast<double>(ground.front().time_ps) + opt.alias_span_s * 1e12;
    for (const auto& r : ground) {
      if (static_cast<double>(r.time_ps) > alias_end) break;
      if (r.is_photon()) gp.push_back(static_cast<double>(r.time_ps));
    }
    auto map_to_space = [](double g, const detail::OffsetPoly& f) {
      double t = g - f(g);
      t = g - f(t);
      return g - f(t);
    };
    std::vector<double> scores;
    for (long k = k_lo; k <= k_hi; ++k) {
      double score = 0.0;
      const auto f = fit.aliased(static_cast<double>(k) * period);
      if (!sp.empty() && !gp.empty()) {
        for (double g : gp) {
          const double t = map_to_space(g, f);
          if (std::abs(sp[nearest(sp, t)] - t) <= opt.probe_half_ps) score += 1.0;
        }
      }
      scores.push_back(score);
    }
    auto best = std::max_element(scores.begin(), scores.end());
    std::vector<double> sorted = scores;
    std::sort(sorted.rbegin(), sorted.rend());
    const bool photon_decisive = sorted[0] >= 10.0 && sorted[0] - sorted[1] > 5.0 * std::sqrt(sorted[1] + 1.0);
    if (!photon_decisive) {
      // Beacon-sequence overlap: with the right alias every ground beacon maps onto an
      // emitted space beacon, a wrong alias pushes the ends past the emitted sequence.
      scores.clear();
      for (long k = k_lo; k <= k_hi; ++k) {
        const auto f = fit.aliased(static_cast<double>(k) * period);
        double score = 0.0;
        for (double g : gb) {
          const double t = map_to_space(g, f);
          if (std::abs(sb[nearest(sb, t)] - t) <= tol) score += 1.0;
        }
        scores.push_back(score);
      }
      best = std::max_element(scores.begin(), scores.end());
      sorted = scores;
      std::sort(sorted.rbegin(), sorted.rend());
    }
    res.alias_shift = k_lo + (best - scores.begin());
    res.alias_significance = (sorted[0] - sorted[1]) / std::sqrt(sorted[1] + 1.0);
    const double delta = static_cast<double>(res.alias_shift) * period;
    fit = fit.aliased(delta);
    for (auto& seg : res.segments) {
      seg.t_s -= delta * 1e-12;
      seg.offset_ps += delta;
    }
  }

  // 5. photon peak centring
  if (opt.photon_refine && !sp.empty()) {
    constexpr double kHalf = 5000.0, kBin = 25.0;
    std::vector<double> dts;
    for (const auto& r : ground) {
      if (!r.is_photon()) continue;
      const double g = static_cast<double>(r.time_ps);
      double t = g - fit(g);
      t = g - fit(t);
      const double d = sp[nearest(sp, t)] - t;
      if (std::abs(d) < kHalf) dts.push_back(d);
      if (dts.size() >= 4'000'000) break;
    }
    const auto nb = static_cast<std::size_t>(2.0 * kHalf / kBin);
    std::vector<double> h(nb, 0.0);
    for (double d : dts) h[std::min(nb - 1, static_cast<std::size_t>((d + kHalf) / kBin))] += 1.0;
    // flat background from the outer 2 ns on each side
    double bg = 0.0;
    std::size_t nbg = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const double centre = -kHalf + (static_cast<double>(b) + 0.5) * kBin;
      if (std::abs(centre) > kHalf - 2000.0) {
        bg += h[b];
        ++nbg;
      }
    }
    bg /= static_cast<double>(std::max<std::size_t>(nbg, 1));
    const auto pk = std::max_element(h.begin(), h.end());
    if (*pk - bg > 5.0 * std::sqrt(bg + 1.0) && *pk >= 20.0) {
      const double centre = -kHalf + (static_cast<double>(pk - h.begin()) + 0.5) * kBin;
      double sw = 0.0, swx = 0.0;
      for (std::size_t b = 0; b < nb; ++b) {
        const double x = -kHalf + (static_cast<double>(b) + 0.5) * kBin;
        if (std::abs(x - centre) > 1500.0) continue;
        const double w = std::max(0.0, h[b] - bg);
        sw += w;
        swx += w * x;
      }
      if (sw > 0.0) {
        res.photon_peak_shift_ps = swx / sw;
        fit.c[0] -= res.photon_peak_shift_ps;
      }
    }
  }

  res.clock = fit.to_clock();
  res.offset_ps = res.clock.offset_ps;
  res.drift_ppm = res.clock.drift_ppm;
  return res;
}

/// Maps ground timestamps onto the space timebase. Events that would land before the
/// space epoch are dropped.
inline TimestampStream correct_ground(std::span<const TimestampRecord> ground, const ClockModel& clock) {
  TimestampStream out;
  out.reserve(ground.size());
  for (const auto& r : ground) {
    const double t = clock.to_space(static_cast<double>(r.time_ps));
    if (t < 0.0) continue;
    TimestampRecord c = r;
    c.time_ps = static_cast<std::uint64_t>(std::llround(t));
    out.push_back(c);
  }
  for (std::size_t k = 1; k < out.size(); ++k)
    if (out[k].time_ps < out[k - 1].time_ps) out[k].time_ps = out[k - 1].time_ps;
  return out;
}

}  // namespace qkdlink
