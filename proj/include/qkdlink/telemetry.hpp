#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qkdlink/error.hpp"
#include "qkdlink/numeric.hpp"

namespace qkdlink {

// ---------------------------------------------------------------------------
// Polarization correlation curves and CHSH

/// Fixed idler polarizer settings; H/V form one basis, D/A the other.
enum class Setting { H = 0, V = 1, D = 2, A = 3 };

inline constexpr std::array<const char*, 4> kSettingNames{"H", "V", "D", "A"};

struct CurvePoint {
  double angle_deg = 0.0;  // signal polarizer angle
  double coincidences = 0.0;
  double accidentals = 0.0;
};

struct CurveFit {
  double amplitude = 0.0;  // A in A cos²(θ − φ) + c
  double phase_deg = 0.0;  // φ, in [0, 180)
  double offset = 0.0;     // c
  double visibility = 0.0;
  double visibility_err = 0.0;
  std::size_t clamped_points = 0;  // net counts below zero set to zero
};

struct ChshFit {
  std::array<CurveFit, 4> settings;  // H, V, D, A
  double visibility_hv = 0.0;
  double visibility_da = 0.0;
  double s_value = 0.0;
  double s_err = 0.0;
};

/// Weighted fit of net = a0 + a1 cos 2θ + a2 sin 2θ (equivalent to A cos²(θ−φ) + c),
/// with Poisson variance of the raw coincidence counts as weights.
inline CurveFit fit_curve(std::span<const CurvePoint> pts) {
  if (pts.size() < 8) throw FitError("correlation curve needs at least 8 angle samples");
  CurveFit out;
  std::vector<double> y(pts.size()), w(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double net = pts[i].coincidences - pts[i].accidentals;
    if (net < 0.0) {
      net = 0.0;
      ++out.clamped_points;
    }
    y[i] = net;
    w[i] = 1.0 / std::max(pts[i].coincidences, 1.0);
  }
  const auto fit = least_squares<3>(pts.size(), [&](std::size_t i) {
    const double t = 2.0 * deg2rad(pts[i].angle_deg);
    return std::array{1.0, std::cos(t), std::sin(t)};
  }, y, w);
  const double a0 = fit.coef[0], a1 = fit.coef[1], a2 = fit.coef[2];
  const double r = std::hypot(a1, a2);
  out.amplitude = 2.0 * r;
  double phi = rad2deg(0.5 * std::atan2(a2, a1));
  if (phi < 0.0) phi += 180.0;
  out.phase_deg = phi;
  out.offset = a0 - r;
  if (!(a0 > 0.0)) return out;  // no signal: V = 0
  out.visibility = std::clamp(r / a0, 0.0, 1.0);
  // delta method on V = r / a0
  std::array<double, 3> g{-r / (a0 * a0), 0.0, 0.0};
  if (r > 0.0) {
    g[1] = a1 / (r * a0);
    g[2] = a2 / (r * a0);
  }
  double var = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) var += g[i] * fit.cov[i][j] * g[j];
  out.visibility_err = std::sqrt(std::max(var, 0.0));
  return out;
}

/// S from the mean visibility of the two bases, assuming CHSH-optimal settings:
/// S = 2√2 · (V_HV + V_DA) / 2.
inline ChshFit fit_correlation_curves(const std::array<std::vector<CurvePoint>, 4>& curves) {
  ChshFit out;
  for (std::size_t s = 0; s < 4; ++s) out.settings[s] = fit_curve(curves[s]);
  const auto& f = out.settings;
  out.visibility_hv = 0.5 * (f[0].visibility + f[1].visibility);
  out.visibility_da = 0.5 * (f[2].visibility + f[3].visibility);
  out.s_value = std::numbers::sqrt2 * (out.visibility_hv + out.visibility_da);
  double var = 0.0;
  for (const auto& c : f) var += c.visibility_err * c.visibility_err;
  out.s_err = std::sqrt(0.5 * var);
  return out;
}

/// Counts for one pair of analyzer settings, indexed by outcome (++, +−, −+, −−).
using SettingCounts = std::array<double, 4>;

struct ChshDirect {
  std::array<double, 4> correlations{};  // E(a,b), E(a,b'), E(a',b), E(a',b')
  double s_value = 0.0;
  double s_err = 0.0;
};

/// S = |E(a,b) − E(a,b') + E(a',b) + E(a',b')| from the 16 raw counts.
inline ChshDirect chsh_from_counts(const std::array<SettingCounts, 4>& n) {
  ChshDirect out;
  double var = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& c = n[k];
    const double tot = c[0] + c[1] + c[2] + c[3];
    if (!(tot > 0.0)) throw FitError("chsh: setting pair with no counts");
    const double e = (c[0] - c[1] - c[2] + c[3]) / tot;
    out.correlations[k] = e;
    var += (1.0 - e * e) / tot;
  }
  const auto& e = out.correlations;
  out.s_value = std::abs(e[0] - e[1] + e[2] + e[3]);
  out.s_err = std::sqrt(var);
  return out;
}

// ---------------------------------------------------------------------------
// Dark counts

struct DarkSample {
  double temp_c = 0.0;
  double dark_cps = 0.0;
};

struct DarkCountFit {
  double amp_cps = 0.0;         // a in a·e^{bT}
  double slope_per_degC = 0.0;  // b
  double extrapolated_cps_at_10C = 0.0;
  double degradation_cps_per_day = 0.0;
  double fit_rms = 0.0;  // rms of ln-residuals
};

inline double extrapolate(const DarkCountFit& f, double temp_c) {
  return f.amp_cps * std::exp(f.slope_per_degC * temp_c);
}

/// Linearized exponential fit, ln(cps) = ln a + b T.
inline DarkCountFit fit_darkcounts(std::span<const DarkSample> s) {
  if (s.size() < 5) throw FitError("dark count fit needs at least 5 samples");
  double tmin = s.front().temp_c, tmax = s.front().temp_c;
  std::vector<double> x, y;
  for (const auto& p : s) {
    if (!(p.dark_cps > 0.0)) throw FitError("dark count fit: non-positive count rate");
    tmin = std::min(tmin, p.temp_c);
    tmax = std::max(tmax, p.temp_c);
    x.push_back(p.temp_c);
    y.push_back(std::log(p.dark_cps));
  }
  if (tmax - tmin < 5.0) throw FitError("dark count fit: temperature span below 5 °C");
  const LineFit l = fit_line(x, y);
  DarkCountFit f;
  f.amp_cps = std::exp(l.intercept);
  f.slope_per_degC = l.slope;
  f.fit_rms = l.rms;
  f.extrapolated_cps_at_10C = extrapolate(f, 10.0);
  return f;
}

struct EpochValue {
  double day = 0.0;
  double cps = 0.0;
};

/// Linear trend (cps per day) of extrapolated dark counts over epochs.
inline double degradation_rate(std::span<const EpochValue> epochs) {
  if (epochs.size() < 3) throw FitError("degradation rate needs at least 3 epochs");
  std::vector<double> x, y;
  for (const auto& e : epochs) {
    x.push_back(e.day);
    y.push_back(e.cps);
  }
  return fit_line(x, y).slope;
}

}  // namespace qkdlink
