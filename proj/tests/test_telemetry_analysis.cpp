#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "support.hpp"

using namespace qkdlink;

namespace {

constexpr double kPeak = 400.0;  // net coincidences at the curve maximum
constexpr double kAcc = 15.0;

std::vector<DarkSample> dark_series(double a, double b, double t0, double t1, int n, double rel_noise,
                                    std::mt19937_64* rng) {
  std::vector<DarkSample> s;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double t = t0 + (t1 - t0) * i / (n - 1);
    double c = a * std::exp(b * t);
    if (rng != nullptr) c *= 1.0 + rel_noise * g(*rng);
    s.push_back({t, c});
  }
  return s;
}

}  // namespace

TEST(Chsh, IdealCurvesGiveTsirelson) {
  const auto curves = qkdtest::synth_curves(1.0, 1000.0, 0.0, nullptr);
  const ChshFit f = fit_correlation_curves(curves);
  EXPECT_NEAR(f.s_value, 2.0 * std::numbers::sqrt2, 1e-6);
  EXPECT_NEAR(f.visibility_hv, 1.0, 1e-9);
  EXPECT_NEAR(f.visibility_da, 1.0, 1e-9);
  EXPECT_NEAR(f.settings[0].phase_deg, 0.0, 1e-6);
  EXPECT_NEAR(f.settings[1].phase_deg, 90.0, 1e-6);
  EXPECT_NEAR(f.settings[2].phase_deg, 45.0, 1e-6);
  EXPECT_NEAR(f.settings[3].phase_deg, 135.0, 1e-6);
  EXPECT_NEAR(f.settings[0].amplitude, 1000.0, 1e-6);
  EXPECT_NEAR(f.settings[0].offset, 0.0, 1e-6);
}

TEST(Chsh, NoisyRefitWithinTolerance) {
  const double v = 2.53 / (2.0 * std::numbers::sqrt2);
  int good = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const ChshFit f = fit_correlation_curves(qkdtest::synth_curves(v, kPeak, kAcc, &rng));
    good += std::abs(f.s_value - 2.53) <= 0.06 ? 1 : 0;
    EXPECT_GE(f.s_value, 0.0);
    EXPECT_LE(f.s_value, 2.0 * std::numbers::sqrt2);
    EXPECT_GT(f.s_err, 0.0);
  }
  EXPECT_GE(good, 90);
}

TEST(Chsh, FlatCurvesGiveZero) {
  const ChshFit f = fit_correlation_curves(qkdtest::synth_curves(0.0, 500.0, 10.0, nullptr));
  EXPECT_NEAR(f.s_value, 0.0, 1e-9);
}

TEST(Chsh, ScaleInvariant) {
  std::mt19937_64 rng(5);
  auto curves = qkdtest::synth_curves(0.9, kPeak, kAcc, &rng);
  const double s0 = fit_correlation_curves(curves).s_value;
  for (auto& c : curves)
    for (auto& p : c) {
      p.coincidences *= 7.0;
      p.accidentals *= 7.0;
    }
  EXPECT_NEAR(fit_correlation_curves(curves).s_value, s0, 1e-9);
}

TEST(Chsh, ConstantFloorSubtracted) {
  const auto clean = qkdtest::synth_curves(0.85, 800.0, 0.0, nullptr);
  const auto floor = qkdtest::synth_curves(0.85, 800.0, 120.0, nullptr);
  const ChshFit a = fit_correlation_curves(clean), b = fit_correlation_curves(floor);
  EXPECT_NEAR(a.s_value, b.s_value, 1e-9);
  EXPECT_NEAR(a.visibility_hv, 0.85, 1e-9);
}

TEST(Chsh, NegativeNetClamped) {
  auto curves = qkdtest::synth_curves(1.0, 100.0, 0.0, nullptr);
  for (auto& p : curves[0]) p.accidentals = 50.0;
  const ChshFit f = fit_correlation_curves(curves);
  EXPECT_GT(f.settings[0].clamped_points, 0u);
  EXPECT_LE(f.settings[0].visibility, 1.0);
}

TEST(Chsh, TooFewAngles) {
  EXPECT_THROW(fit_correlation_curves(qkdtest::synth_curves(0.9, 100.0, 0.0, nullptr, 7)), FitError);
}

TEST(Chsh, DirectCounts) {
  // E = V cos 2(a-b) at the CHSH angles, perfect statistics
  const double v = 0.9;
  std::array<SettingCounts, 4> n{};
  const double e = v / std::numbers::sqrt2;
  const std::array<double, 4> sign{1.0, -1.0, 1.0, 1.0};
  for (std::size_t k = 0; k < 4; ++k) {
    const double ek = sign[k] * e;
    n[k] = {2500.0 * (1 + ek), 2500.0 * (1 - ek), 2500.0 * (1 - ek), 2500.0 * (1 + ek)};
  }
  const ChshDirect d = chsh_from_counts(n);
  EXPECT_NEAR(d.s_value, 2.0 * std::numbers::sqrt2 * v, 1e-12);
  n[1] = {0, 0, 0, 0};
  EXPECT_THROW(chsh_from_counts(n), FitError);
}

TEST(DarkCounts, NoiselessRecovery) {
  const auto s = dark_series(1000.0, 0.08, -10.0, 25.0, 12, 0.0, nullptr);
  const DarkCountFit f = fit_darkcounts(s);
  EXPECT_NEAR(f.amp_cps / 1000.0, 1.0, 1e-4);
  EXPECT_NEAR(f.slope_per_degC / 0.08, 1.0, 1e-4);
  EXPECT_NEAR(f.extrapolated_cps_at_10C, 1000.0 * std::exp(0.8), 1e-6 * 1000.0);
  EXPECT_LT(f.fit_rms, 1e-9);
}

TEST(DarkCounts, ConstantGivesMean) {
  std::vector<DarkSample> s;
  for (int i = 0; i < 6; ++i) s.push_back({5.0 + 2.0 * i, 740.0});
  const DarkCountFit f = fit_darkcounts(s);
  EXPECT_NEAR(f.slope_per_degC, 0.0, 1e-12);
  EXPECT_NEAR(extrapolate(f, 10.0), 740.0, 1e-9);
}

TEST(DarkCounts, InterpolationConsistency) {
  std::mt19937_64 rng(8);
  const auto s = dark_series(2300.0, 0.06, 0.0, 20.0, 9, 0.05, &rng);
  const DarkCountFit f = fit_darkcounts(s);
  for (const auto& p : s) EXPECT_DOUBLE_EQ(extrapolate(f, p.temp_c), f.amp_cps * std::exp(f.slope_per_degC * p.temp_c));
  EXPECT_DOUBLE_EQ(f.extrapolated_cps_at_10C, extrapolate(f, 10.0));
}

TEST(DarkCounts, ScaleFree) {
  std::mt19937_64 rng(9);
  auto s = dark_series(1500.0, 0.07, 2.0, 18.0, 10, 0.1, &rng);
  const DarkCountFit f = fit_darkcounts(s);
  for (auto& p : s) p.dark_cps *= 3.5;
  const DarkCountFit g = fit_darkcounts(s);
  EXPECT_NEAR(g.amp_cps / f.amp_cps, 3.5, 1e-9);
  EXPECT_NEAR(g.slope_per_degC, f.slope_per_degC, 1e-12);
  EXPECT_NEAR(g.fit_rms, f.fit_rms, 1e-12);
}

TEST(DarkCounts, Errors) {
  EXPECT_THROW(fit_darkcounts(dark_series(1000.0, 0.08, 0.0, 20.0, 4, 0.0, nullptr)), FitError);
  EXPECT_THROW(fit_darkcounts(dark_series(1000.0, 0.08, 10.0, 13.0, 6, 0.0, nullptr)), FitError);
  auto s = dark_series(1000.0, 0.08, 0.0, 20.0, 6, 0.0, nullptr);
  s[2].dark_cps = 0.0;
  EXPECT_THROW(fit_darkcounts(s), FitError);
}

TEST(Degradation, RecoversDailySlopes) {
  for (double rate : {170.0, 270.0}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(rate));
    std::normal_distribution<double> g(0.0, 1.0);
    int ok = 0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<EpochValue> epochs;
      for (int day = 0; day <= 120; day += 6) {
        // per-epoch extrapolated value from a noisy temperature scan
        const double a10 = 3000.0 + rate * day;
        const double b = 0.08;
        const auto scan = dark_series(a10 * std::exp(-b * 10.0), b, 0.0, 20.0, 8, 0.03, &rng);
        epochs.push_back({static_cast<double>(day), fit_darkcounts(scan).extrapolated_cps_at_10C});
      }
      ok += std::abs(degradation_rate(epochs) / rate - 1.0) < 0.1 ? 1 : 0;
    }
    EXPECT_EQ(ok, 50) << rate;
  }
}

TEST(Degradation, DuplicatedEpochsKeepSlope) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 200.0);
  std::vector<EpochValue> e;
  for (int d = 0; d < 10; ++d) e.push_back({d * 10.0, 5000.0 + 170.0 * d * 10.0 + g(rng)});
  const double s0 = degradation_rate(e);
  const auto copy = e;
  e.insert(e.end(), copy.begin(), copy.end());
  EXPECT_NEAR(degradation_rate(e), s0, 1e-9);
  // two identical epochs lying on the fitted line do not move it either
  std::vector<EpochValue> line{{0, 100}, {1, 270}, {2, 440}};
  line.push_back({3, 610});
  line.push_back({3, 610});
  EXPECT_NEAR(degradation_rate(line), 170.0, 1e-9);
  EXPECT_THROW(degradation_rate(std::vector<EpochValue>{{0, 1}, {1, 2}}), FitError);
}
