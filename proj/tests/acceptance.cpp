// Acceptance runner: one PASS/FAIL line per criterion.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace qkdlink;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome optimum_operating_point() {
  SweepSpec spec{{"source.pair_rate", 10e6, 200e6, 50, true}, SweepAxis{"protocol.tau_c_ns", 0.2, 3.0, 50, false},
                 Metric::AvgKeyPerPass};
  const auto t0 = Clock::now();
  const SweepResult r = run_sweep(spec, SystemParams{});
  const double dt = seconds_since(t0);
  const double b = r.axis1_values[r.best_i], tau = r.axis2_values[r.best_j];
  const double mu = b * tau * 1e-9;
  const bool ok = b >= 50e6 && b <= 90e6 && tau >= 0.8 && tau <= 1.4 && mu >= 0.04 && mu <= 0.10 && dt < 60.0;
  return {ok, fmt("argmax B=%.1f Mcps tau=%.3f ns mu=%.3f, 50x50 grid in %.2f s", b / 1e6, tau, mu, dt)};
}

Outcome raw_key_per_pass() {
  bool ok = true;
  std::string d;
  for (double b : {25e6, 50e6, 75e6}) {
    SystemParams p;
    p.source.pair_rate = b;
    const double raw = run_pass(p).raw_key_bits;
    ok = ok && raw >= 50e3 && raw <= 450e3;
    d += fmt("%s%.0fM:%.0f", d.empty() ? "" : " ", b / 1e6, raw);
  }
  return {ok, "raw bits " + d};
}

Outcome finite_key_threshold() {
  const ProtocolParams proto;
  auto ell = [&](double n, double q) { return finite_key_length(FiniteKeyInput::from(proto, n, q)); };
  double lo = 0.0, hi = 0.5;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ell(2e5, mid) > 0 ? lo : hi) = mid;
  }
  const double asym = 2e5 * asymptotic_key_fraction(0.015, proto.ec_efficiency);
  const double ratio = static_cast<double>(ell(2e5, 0.015)) / asym;
  const bool ok = std::abs(lo - 0.08) <= 0.015 && std::abs(ratio - 0.5) <= 0.15;
  return {ok, fmt("zero crossing at QBER %.2f%%, finite/asym at 1.5%% = %.3f", 100 * lo, ratio)};
}

Outcome dark_count_asymmetry() {
  auto sweep = [](const char* path, double lo, double hi) {
    SweepSpec s{{path, lo, hi, 2, true}, std::nullopt, Metric::AvgKeyPerPass};
    return run_sweep(s, SystemParams{}).values;
  };
  const auto sp = sweep("detector_space.dark_cps", 1e3, 1e5);
  const auto gr = sweep("detector_ground.dark_cps", 5e2, 5e4);
  const double ds = std::abs(sp[1] / sp[0] - 1.0);
  const double dg = 1.0 - gr[1] / gr[0];
  return {ds < 0.10 && dg > 0.80, fmt("space 1k->100k: %.1f%% change; ground 0.5k->50k: %.1f%% drop", 100 * ds, 100 * dg)};
}

Outcome qber_budget() {
  const SystemParams p;
  const auto b = channel_loss({0.0, 90.0, p.orbit.altitude_km}, p);
  const RatePoint r = rate_point(p, b.total_loss_db);
  const double src = true_pair_error(p);
  const bool ok = std::abs(r.qber - 0.035) <= 0.01 && src == (1.0 - p.source.visibility) / 2.0;
  return {ok, fmt("zenith loss %.2f dB, QBER %.2f%%, source term %.4f%%", b.total_loss_db, 100 * r.qber, 100 * src)};
}

Outcome monte_carlo_equivalence() {
  const auto presets = qkdtest::mc_presets();
  bool ok = presets.size() >= 10;
  double worst = 0.0, slowest = 0.0;
  std::size_t most = 0;
  std::string worst_at;
  for (const auto& m : presets) {
    const auto t0 = Clock::now();
    const qkdtest::McOutcome o = qkdtest::mc_compare(m);
    const double dt = seconds_since(t0);
    slowest = std::max(slowest, dt);
    most = std::max(most, o.events);
    ok = ok && dt < 10.0 && o.events <= 1000000;
    for (const auto& c : o.checks) {
      ok = ok && c.within(3.0);
      if (std::abs(c.z()) > worst) {
        worst = std::abs(c.z());
        worst_at = m.name + "/" + c.quantity;
      }
    }
  }
  return {ok, fmt("%zu presets, max |z| %.2f (%s), max events %zu, slowest %.2f s", presets.size(), worst,
                  worst_at.c_str(), most, slowest)};
}

Outcome sync_robustness() {
  const auto sc = qkdtest::sync_scenario();
  const SimResult r = simulate_scenario(sc.params, sc.profile, sc.clock, sc.beacon, sc.duration_s, sc.seed);
  SyncResult s;
  try {
    s = sync_clocks(r.space, r.ground, sc.beacon, 2e-3);
  } catch (const SyncError& e) {
    return {false, std::string("no lock: ") + e.what()};
  }
  const double tau = sc.params.protocol.tau_c_ns;
  const TimestampStream g = correct_ground(r.ground, s.clock);
  const SiftReport rep = sift_and_estimate(find_coincidences(r.space, g, tau), r.space, g, sc.duration_s);
  const TimestampStream exact = exact_ground_correction(r.ground, sc.clock);
  const TruthTally t = tally_truth(r, exact, find_coincidences(r.space, exact, tau));
  const double q = t.qber();
  const double sigma = std::sqrt(q * (1 - q) / static_cast<double>(std::max<std::size_t>(t.sifted, 1)));
  // clock error of the recovered model against truth across the run
  double max_err = 0.0;
  for (double ts = 0.0; ts <= sc.duration_s; ts += 1.0)
    max_err = std::max(max_err, std::abs(s.clock.error_ps(ts * 1e12) - sc.clock.error_ps(ts * 1e12)));
  const double drift_us = sc.clock.drift_ppm * sc.duration_s;
  const bool ok = s.residual_rms_ps < 1000.0 && std::abs(rep.qber_est - q) <= 3.0 * sigma;
  return {ok, fmt("offset 1 ms + %.0f us drift: residual %.0f ps rms, max clock error %.1f ps, QBER %.3f%% vs truth %.3f%% "
                  "(sigma %.3f%%)",
                  drift_us, s.residual_rms_ps, max_err, 100 * rep.qber_est, 100 * q, 100 * sigma)};
}

Outcome tabletop_reproduction() {
  const Scenario s = load_scenario(qkdtest::source_path("scenarios/tabletop_fig9.cfg"));
  const LossProfile lp = s.loss_profile();
  const PassReport r = run_pass(s.params, lp.loss_db, 1.0);
  const std::vector<double> l40{40.0};
  const LossPoint at40 = loss_sweep(s.params, l40).front();
  const bool ok = r.asym_key_bits >= 13e3 && r.asym_key_bits <= 52e3 && r.finite_key_bits > 0 &&
                  static_cast<double>(r.finite_key_bits) < r.asym_key_bits && at40.qber < 0.11 &&
                  at40.secret_key_rate > 0.0;
  return {ok, fmt("asym %.0f bits, finite %llu bits (%llu AES keys); 40 dB: QBER %.2f%%, key %.1f bit/s",
                  r.asym_key_bits, static_cast<unsigned long long>(r.finite_key_bits),
                  static_cast<unsigned long long>(r.aes_keys), 100 * at40.qber, at40.secret_key_rate)};
}

Outcome chsh_pipeline() {
  const double v = 2.53 / (2.0 * std::numbers::sqrt2);
  int good = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(77000 + seed);
    const ChshFit f = fit_correlation_curves(qkdtest::synth_curves(v, 400.0, 15.0, &rng));
    good += std::abs(f.s_value - 2.53) <= 0.06 ? 1 : 0;
  }
  const double ideal = fit_correlation_curves(qkdtest::synth_curves(1.0, 1000.0, 0.0, nullptr)).s_value;
  const bool ok = good >= 90 && std::abs(ideal - 2.0 * std::numbers::sqrt2) <= 1e-6;
  return {ok, fmt("%d/100 noisy refits within 0.06 of 2.53; ideal S - 2sqrt2 = %.1e", good,
                  ideal - 2.0 * std::numbers::sqrt2)};
}

Outcome degradation_fits() {
  std::vector<DarkSample> clean;
  for (int i = 0; i < 12; ++i) {
    const double t = -10.0 + 3.0 * i;
    clean.push_back({t, 1000.0 * std::exp(0.08 * t)});
  }
  const DarkCountFit f = fit_darkcounts(clean);
  const double ea = std::abs(f.amp_cps / 1000.0 - 1.0), eb = std::abs(f.slope_per_degC / 0.08 - 1.0);
  bool ok = ea < 5e-5 && eb < 5e-5;
  std::string d = fmt("noiseless rel err a %.1e b %.1e;", ea, eb);
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double rate : {170.0, 270.0}) {
    std::vector<EpochValue> epochs;
    for (int day = 0; day <= 120; day += 6) {
      const double a10 = 3000.0 + rate * day;
      std::vector<DarkSample> scan;
      for (int i = 0; i < 8; ++i) {
        const double t = 20.0 * i / 7.0;
        scan.push_back({t, a10 * std::exp(0.08 * (t - 10.0)) * (1.0 + 0.03 * g(rng))});
      }
      epochs.push_back({static_cast<double>(day), fit_darkcounts(scan).extrapolated_cps_at_10C});
    }
    const double slope = degradation_rate(epochs);
    ok = ok && std::abs(slope / rate - 1.0) < 0.10;
    d += fmt(" %.0f -> %.1f cps/day", rate, slope);
  }
  return {ok, d};
}

Outcome property_suites(const std::string& binaries) {
  std::vector<std::string> bins;
  std::stringstream ss(binaries);
  for (std::string b; std::getline(ss, b, '|');)
    if (!b.empty()) bins.push_back(b);
  if (bins.empty()) return {false, "no unit test binaries given"};
  const auto t0 = Clock::now();
  int failed = 0;
  for (const auto& b : bins) {
    const std::string cmd = "\"" + b + "\" --gtest_brief=1 > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      ++failed;
      std::fprintf(stderr, "unit suite failed: %s\n", b.c_str());
    }
  }
  const double dt = seconds_since(t0);
  return {failed == 0 && dt < 300.0, fmt("%zu suites, %d failed, %.1f s total", bins.size(), failed, dt)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string binaries = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"optimum operating point", optimum_operating_point},
      {"raw key per ideal pass", raw_key_per_pass},
      {"finite-key threshold", finite_key_threshold},
      {"dark-count asymmetry", dark_count_asymmetry},
      {"QBER budget at zenith", qber_budget},
      {"Monte Carlo vs analytic", monte_carlo_equivalence},
      {"sync robustness", sync_robustness},
      {"table-top reproduction", tabletop_reproduction},
      {"CHSH pipeline", chsh_pipeline},
      {"degradation fits", degradation_fits},
      {"property suites", [&] { return property_suites(binaries); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
