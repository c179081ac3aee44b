#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qkdlink/error.hpp"
#include "qkdlink/event_sim.hpp"
#include "qkdlink/finite_key.hpp"
#include "qkdlink/link_budget.hpp"
#include "qkdlink/numeric.hpp"
#include "qkdlink/orbit.hpp"
#include "qkdlink/params.hpp"
#include "qkdlink/rate_model.hpp"

namespace qkdlink {

// ---------------------------------------------------------------------------
// Pass integration

struct PassPoint {
  PassSample geometry;
  LinkBreakdown link;
  RatePoint rate;
  bool used = true;  // false above protocol.qber_cap, or with no correlated signal (QBER 0.5)
};

struct PassReport {
  std::vector<PassPoint> samples;
  double dt_s = 0.0;
  double raw_key_bits = 0.0;   // sifted coincidences over used samples
  double avg_qber = 0.0;       // sifted-weighted
  double asym_key_bits = 0.0;
  std::uint64_t finite_key_bits = 0;
  std::uint64_t aes_keys = 0;  // complete 256-bit keys in the finite key
  std::size_t used_samples = 0;
};

/// Integrates (rectangle rule) per-sample rates over a pass given as geometry samples
/// with their link losses.
inline PassReport integrate_pass(const SystemParams& p, std::vector<PassPoint> pts, double dt_s) {
  PassReport r;
  r.dt_s = dt_s;
  double err = 0.0;
  for (auto& s : pts) {
    s.rate = rate_point(p, s.link.total_loss_db);
    s.used = s.rate.qber <= p.protocol.qber_cap && s.rate.qber < 0.5;
    if (!s.used) continue;
    ++r.used_samples;
    r.raw_key_bits += s.rate.sifted_rate_cps * dt_s;
    err += s.rate.sifted_rate_cps * s.rate.qber * dt_s;
    r.asym_key_bits += s.rate.asym_key_rate_cps * dt_s;
  }
  r.avg_qber = r.raw_key_bits > 0.0 ? err / r.raw_key_bits : 0.0;
  r.finite_key_bits = finite_key_length(FiniteKeyInput::from(p.protocol, r.raw_key_bits, std::min(r.avg_qber, 0.5)));
  r.aes_keys = aes256_keys(r.finite_key_bits);
  r.samples = std::move(pts);
  return r;
}

/// Geometry and link loss of every sample of the configured pass.
inline std::vector<PassPoint> pass_link(const SystemParams& p) {
  if (p.orbit.max_elevation_deg < p.orbit.min_elevation_deg)
    throw ValidationError("empty pass: orbit.max_elevation_deg below orbit.min_elevation_deg");
  std::vector<PassPoint> pts;
  for (const auto& g : pass_geometry(p.orbit)) {
    PassPoint pt;
    pt.geometry = g;
    pt.link = channel_loss(g, p);
    pts.push_back(pt);
  }
  return pts;
}

inline PassReport run_pass(const SystemParams& p) {
  validate(p);
  return integrate_pass(p, pass_link(p), p.orbit.sample_dt_s);
}

/// Same as run_pass with externally supplied per-sample losses (table-top attenuator
/// profiles). Samples are dt_s apart.
inline PassReport run_pass(const SystemParams& p, std::span<const double> loss_db, double dt_s) {
  validate(p);
  if (loss_db.empty()) throw ValidationError("empty pass: no loss samples");
  if (!(dt_s > 0.0)) throw ValidationError("pass sample spacing must be > 0");
  std::vector<PassPoint> pts;
  for (std::size_t i = 0; i < loss_db.size(); ++i) {
    PassPoint pt;
    pt.geometry.t_s = static_cast<double>(i) * dt_s;
    pt.link.total_loss_db = loss_db[i];
    pts.push_back(pt);
  }
  return integrate_pass(p, std::move(pts), dt_s);
}

/// Link loss of the configured pass as a piecewise-constant profile starting at t = 0.
inline LossProfile pass_loss_profile(const SystemParams& p) {
  const auto pts = pass_link(p);
  LossProfile lp{{}, {}};
  const double t0 = pts.front().geometry.t_s;
  for (const auto& s : pts) {
    lp.t_s.push_back(s.geometry.t_s - t0);
    lp.loss_db.push_back(s.link.total_loss_db);
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class Metric { AvgKeyPerPass, RawKeyPerPass, FiniteKey, Qber };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::AvgKeyPerPass: return "avg_key_per_pass";
    case Metric::RawKeyPerPass: return "raw_key_per_pass";
    case Metric::FiniteKey: return "finite_key";
    case Metric::Qber: return "qber";
  }
  return "?";
}

inline Metric parse_metric(std::string_view s) {
  for (Metric m : {Metric::AvgKeyPerPass, Metric::RawKeyPerPass, Metric::FiniteKey, Metric::Qber})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown metric '" + std::string(s) + "'");
}

inline double metric_value(const PassReport& r, Metric m) {
  switch (m) {
    case Metric::AvgKeyPerPass: return r.asym_key_bits;
    case Metric::RawKeyPerPass: return r.raw_key_bits;
    case Metric::FiniteKey: return static_cast<double>(r.finite_key_bits);
    case Metric::Qber: return r.avg_qber;
  }
  return 0.0;
}

struct SweepAxis {
  std::string path;
  double min = 0.0;
  double max = 0.0;
  std::size_t n = 1;
  bool log_scale = false;

  std::vector<double> values() const { return spaced(min, max, n, log_scale); }
};

struct SweepSpec {
  SweepAxis axis1;
  std::optional<SweepAxis> axis2;
  Metric metric = Metric::AvgKeyPerPass;
};

/// n ≥ 2 with min < max, or the degenerate single cell n = 1 with min == max.
inline void validate(const SweepAxis& a) {
  if (find_param(a.path) == nullptr || !find_param(a.path)->number)
    throw ValidationError("unknown numeric parameter path '" + a.path + "'");
  if (a.n == 1) {
    if (a.min != a.max) throw ValidationError("sweep axis " + a.path + ": n = 1 requires min == max");
  } else if (a.n < 2 || !(a.min < a.max)) {
    throw ValidationError("sweep axis " + a.path + ": needs n ≥ 2 and min < max");
  }
  if (a.log_scale && !(a.min > 0.0)) throw ValidationError("sweep axis " + a.path + ": log scale needs min > 0");
}

struct SweepResult {
  std::vector<double> axis1_values;
  std::vector<double> axis2_values;  // {} for one-dimensional sweeps
  std::vector<double> values;        // row-major, rows follow axis1
  std::size_t best_i = 0;
  std::size_t best_j = 0;
  double best_value = 0.0;
  SystemParams best_params;

  double at(std::size_t i, std::size_t j) const { return values[i * std::max<std::size_t>(axis2_values.size(), 1) + j]; }
};

/// Evaluates the metric on every grid cell in parallel. Each cell is a pure function
/// of its coordinates, so results do not depend on scheduling. Ties in the argmax go
/// to the first cell in row-major order (the minimum for the qber metric).
inline SweepResult run_sweep(const SweepSpec& spec, const SystemParams& base, unsigned threads = 0) {
  validate(base);
  validate(spec.axis1);
  if (spec.axis2) validate(*spec.axis2);
  SweepResult res;
  res.axis1_values = spec.axis1.values();
  if (spec.axis2) res.axis2_values = spec.axis2->values();
  const std::size_t n1 = res.axis1_values.size();
  const std::size_t n2 = std::max<std::size_t>(res.axis2_values.size(), 1);

  auto cell_params = [&](std::size_t i, std::size_t j) {
    SystemParams p = base;
    param_ref(p, spec.axis1.path) = res.axis1_values[i];
    if (spec.axis2) param_ref(p, spec.axis2->path) = res.axis2_values[j];
    return p;
  };
  // Fail early on cells outside the parameter domain.
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) validate(cell_params(i, j));

  res.values.assign(n1 * n2, 0.0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < n1 * n2; c = next++)
      res.values[c] = metric_value(run_pass(cell_params(c / n2, c % n2)), spec.metric);
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n1 * n2));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const bool minimize = spec.metric == Metric::Qber;
  std::size_t best = 0;
  for (std::size_t c = 1; c < res.values.size(); ++c)
    if (minimize ? res.values[c] < res.values[best] : res.values[c] > res.values[best]) best = c;
  res.best_i = best / n2;
  res.best_j = best % n2;
  res.best_value = res.values[best];
  res.best_params = cell_params(res.best_i, res.best_j);
  return res;
}

// ---------------------------------------------------------------------------
// Static-link loss sweep

struct LossPoint {
  double loss_db = 0.0;
  double heralding_signal = 0.0;  // coincidences / ground singles
  double heralding_idler = 0.0;   // coincidences / space singles (transmitted arm)
  double coincidence_cps = 0.0;
  double qber = 0.0;
  double secret_key_rate = 0.0;
};

inline std::vector<LossPoint> loss_sweep(const SystemParams& p, std::span<const double> losses) {
  validate(p);
  std::vector<LossPoint> out;
  for (double loss : losses) {
    if (!(loss >= 0.0)) throw ValidationError("loss sweep: losses must be ≥ 0");
    const RatePoint r = rate_point(p, loss);
    LossPoint lp;
    lp.loss_db = loss;
    lp.coincidence_cps = r.coinc_total_cps();
    lp.heralding_signal = r.singles_ground_cps > 0.0 ? lp.coincidence_cps / r.singles_ground_cps : 0.0;
    lp.heralding_idler = r.singles_space_cps > 0.0 ? lp.coincidence_cps / r.singles_space_cps : 0.0;
    lp.qber = r.qber;
    lp.secret_key_rate = r.asym_key_rate_cps;
    out.push_back(lp);
  }
  return out;
}

}  // namespace qkdlink
