// qkdlink command line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkdlink/qkdlink.hpp"

using namespace qkdlink;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string format = "csv";
  std::uint64_t seed = 1;
};

void add_common(CLI::App* app, Common& c, bool with_seed = false) {
  app->add_option("--config", c.config, "scenario / parameter file");
  app->add_option("--out", c.out, "output file (default stdout)");
  app->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  if (with_seed) app->add_option("--seed", c.seed, "RNG seed");
}

Scenario scenario_of(const Common& c) {
  if (c.config.empty()) return Scenario{};
  return load_scenario(c.config);
}

/// --out target or stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw ParseError("cannot write '" + path + "'");
  }
  std::ostream& os() { return file_ ? *file_ : std::cout; }
  bool is_stdout() const { return !file_; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void write_summary(const json& j, const std::string& path, bool main_is_stdout) {
  if (!path.empty()) {
    std::ofstream f(path);
    if (!f) throw ParseError("cannot write '" + path + "'");
    f << j.dump(2) << "\n";
  } else {
    (main_is_stdout ? std::cerr : std::cout) << j.dump(2) << "\n";
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// minimal CSV with a header row; '#' lines skipped
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
  int need(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw ParseError("missing column '" + name + "'");
    return c;
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) {
    const auto a = f.find_first_not_of(" \t\r");
    const auto b = f.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : f.substr(a, b - a + 1));
  }
  return out;
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = split(line);
    if (t.header.empty()) {
      t.header = f;
      continue;
    }
    if (f.size() != t.header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) + " fields");
    t.rows.push_back(std::move(f));
  }
  if (t.header.empty()) throw ParseError(path + ": empty table");
  return t;
}

double cell(const Table& t, std::size_t r, int c) {
  return parse_number(t.header[c], t.rows[r][c]);
}

// ---------------------------------------------------------------------------

json to_json(const PassReport& r) {
  return {{"samples", r.samples.size()},  {"used_samples", r.used_samples},
          {"dt_s", r.dt_s},               {"raw_key_bits", r.raw_key_bits},
          {"avg_qber", r.avg_qber},       {"asym_key_bits", r.asym_key_bits},
          {"finite_key_bits", r.finite_key_bits}, {"aes256_keys", r.aes_keys}};
}

int cmd_pass(const Common& c, bool geometry_only, bool with_link, const std::string& summary) {
  const Scenario s = scenario_of(c);
  Output out(c.out);
  std::vector<std::string> cols{"t_s", "elevation_deg", "slant_range_km"};
  if (geometry_only) {
    const auto g = pass_geometry(s.params.orbit);
    if (c.format == "json") {
      json arr = json::array();
      for (const auto& p : g) arr.push_back({{"t_s", p.t_s}, {"elevation_deg", p.elevation_deg}, {"slant_range_km", p.slant_range_km}});
      out.os() << json{{"samples", arr}}.dump(2) << "\n";
    } else {
      out.os() << "t_s,elevation_deg,slant_range_km\n";
      for (const auto& p : g) out.os() << num(p.t_s) << "," << num(p.elevation_deg) << "," << num(p.slant_range_km) << "\n";
    }
    return 0;
  }
  const PassReport r = run_pass(s.params);
  if (with_link)
    for (const char* k : {"geometric_loss_db", "pointing_loss_db", "atmospheric_loss_db", "optics_loss_db"}) cols.push_back(k);
  for (const char* k : {"loss_db", "singles_space_cps", "singles_ground_cps", "coinc_true_cps", "coinc_acc_cps",
                        "coinc_noise_cps", "qber", "sifted_cps", "key_cps", "used"})
    cols.push_back(k);
  auto values = [&](const PassPoint& p) {
    std::vector<double> v;
    v.reserve(cols.size());
    auto add = [&](std::initializer_list<double> xs) {
      for (double x : xs) v.push_back(x);
    };
    add({p.geometry.t_s, p.geometry.elevation_deg, p.geometry.slant_range_km});
    if (with_link)
      add({p.link.geometric_loss_db, p.link.pointing_loss_db, p.link.atmospheric_loss_db, p.link.optics_loss_db});
    add({p.link.total_loss_db, p.rate.singles_space_cps, p.rate.singles_ground_cps, p.rate.coinc_true_cps,
         p.rate.coinc_acc_cps, p.rate.coinc_noise_cps, p.rate.qber, p.rate.sifted_rate_cps, p.rate.asym_key_rate_cps,
         p.used ? 1.0 : 0.0});
    return v;
  };
  if (c.format == "json") {
    json arr = json::array();
    for (const auto& p : r.samples) {
      json row;
      const auto v = values(p);
      for (std::size_t i = 0; i < cols.size(); ++i) row[cols[i]] = v[i];
      arr.push_back(row);
    }
    out.os() << json{{"report", to_json(r)}, {"samples", arr}}.dump(2) << "\n";
    if (!summary.empty()) write_summary(to_json(r), summary, false);
    return 0;
  }
  for (std::size_t i = 0; i < cols.size(); ++i) out.os() << (i ? "," : "") << cols[i];
  out.os() << "\n";
  for (const auto& p : r.samples) {
    const auto v = values(p);
    for (std::size_t i = 0; i < v.size(); ++i) out.os() << (i ? "," : "") << num(v[i]);
    out.os() << "\n";
  }
  write_summary(to_json(r), summary, out.is_stdout());
  return 0;
}

SweepAxis axis_of(const json& j) {
  SweepAxis a;
  a.path = j.at("path").get<std::string>();
  a.min = j.at("min").get<double>();
  a.max = j.at("max").get<double>();
  a.n = j.at("n").get<std::size_t>();
  const std::string scale = j.value("scale", "lin");
  if (scale != "lin" && scale != "log") throw ValidationError("sweep axis " + a.path + ": scale must be lin or log");
  a.log_scale = scale == "log";
  return a;
}

int cmd_sweep(const Common& c, const std::string& spec_path, const std::string& summary, unsigned threads) {
  std::ifstream in(spec_path);
  if (!in) throw ParseError("cannot open sweep spec '" + spec_path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(spec_path + ": " + e.what());
  }
  SweepSpec spec{axis_of(j.at("axis1")), std::nullopt, parse_metric(j.value("metric", "avg_key_per_pass"))};
  if (j.contains("axis2")) spec.axis2 = axis_of(j.at("axis2"));
  const Scenario s = scenario_of(c);
  const SweepResult r = run_sweep(spec, s.params, threads);
  const std::size_t n2 = std::max<std::size_t>(r.axis2_values.size(), 1);

  json best{{"metric", to_string(spec.metric)}, {"best_value", r.best_value}, {spec.axis1.path, r.axis1_values[r.best_i]}};
  if (spec.axis2) best[spec.axis2->path] = r.axis2_values[r.best_j];
  best["mean_pairs_per_window"] = r.best_params.source.pair_rate * r.best_params.protocol.tau_c_ns * 1e-9;

  Output out(c.out);
  if (c.format == "json") {
    json rows = json::array();
    for (std::size_t i = 0; i < r.axis1_values.size(); ++i) {
      json row = json::array();
      for (std::size_t k = 0; k < n2; ++k) row.push_back(r.at(i, k));
      rows.push_back(row);
    }
    out.os() << json{{"axis1", r.axis1_values}, {"axis2", r.axis2_values}, {"values", rows}, {"argmax", best}}.dump(2)
             << "\n";
    if (!summary.empty()) write_summary(best, summary, false);
    return 0;
  }
  out.os() << spec.axis1.path;
  if (spec.axis2)
    for (double v : r.axis2_values) out.os() << "," << spec.axis2->path << "=" << num(v);
  else
    out.os() << "," << to_string(spec.metric);
  out.os() << "\n";
  for (std::size_t i = 0; i < r.axis1_values.size(); ++i) {
    out.os() << num(r.axis1_values[i]);
    for (std::size_t k = 0; k < n2; ++k) out.os() << "," << num(r.at(i, k));
    out.os() << "\n";
  }
  write_summary(best, summary, out.is_stdout());
  return 0;
}

int cmd_finite_key(const Common& c, std::optional<double> n, std::optional<double> q, bool map, double n_min,
                   double n_max, std::size_t n_steps, double q_max, std::size_t q_steps) {
  const Scenario s = scenario_of(c);
  Output out(c.out);
  if (map) {
    const auto ng = spaced(n_min, n_max, n_steps, true);
    const auto qg = spaced(0.0, q_max, q_steps, false);
    const FiniteKeyMap m = finite_key_map(ng, qg, s.params.protocol);
    if (c.format == "json") {
      json rows = json::array();
      for (std::size_t qi = 0; qi < qg.size(); ++qi) {
        json row = json::array();
        for (std::size_t ni = 0; ni < ng.size(); ++ni) row.push_back(m.at(qi, ni));
        rows.push_back(row);
      }
      out.os() << json{{"n_raw", ng}, {"qber", qg}, {"finite_key_bits", rows}}.dump(2) << "\n";
    } else {
      out.os() << "qber,n_raw,finite_key_bits\n";
      for (std::size_t qi = 0; qi < qg.size(); ++qi)
        for (std::size_t ni = 0; ni < ng.size(); ++ni) out.os() << num(qg[qi]) << "," << num(ng[ni]) << "," << m.at(qi, ni) << "\n";
    }
    return 0;
  }
  if (!n || !q) throw ValidationError("finite-key needs --n and --qber, or --map");
  const auto bits = finite_key_length(FiniteKeyInput::from(s.params.protocol, *n, *q));
  if (c.format == "json") {
    out.os() << json{{"n_raw", *n}, {"qber", *q}, {"finite_key_bits", bits}, {"aes256_keys", aes256_keys(bits)}}.dump(2)
             << "\n";
  } else {
    out.os() << "n_raw,qber,finite_key_bits,aes256_keys\n"
             << num(*n) << "," << num(*q) << "," << bits << "," << aes256_keys(bits) << "\n";
  }
  return 0;
}

int cmd_simulate(const Common& c, const std::string& space_path, const std::string& ground_path,
                 const std::string& truth_path, std::optional<double> duration) {
  const Scenario s = scenario_of(c);
  const double T = duration.value_or(s.sim.duration_s);
  const SimResult r = simulate_scenario(s.params, s.loss_profile(), s.clock, s.beacon, T, c.seed);
  write_timestamps(r.space, space_path);
  write_timestamps(r.ground, ground_path);
  if (!truth_path.empty()) write_truth_csv(truth_path, r);
  const RatePoint e = expected_average(r);
  std::size_t sp = 0, gp = 0;
  for (const auto& x : r.space) sp += x.is_photon();
  for (const auto& x : r.ground) gp += x.is_photon();
  Output out(c.out);
  if (c.format == "json") {
    out.os() << json{{"duration_s", T},
                     {"seed", c.seed},
                     {"space_events", r.space.size()},
                     {"ground_events", r.ground.size()},
                     {"space_photons", sp},
                     {"ground_photons", gp},
                     {"expected_coincidences", e.coinc_total_cps() * T},
                     {"expected_qber", e.qber}}
                    .dump(2)
             << "\n";
  } else {
    out.os() << "duration_s,seed,space_events,ground_events,space_photons,ground_photons,expected_coincidences,expected_qber\n"
             << num(T) << "," << c.seed << "," << r.space.size() << "," << r.ground.size() << "," << sp << "," << gp << ","
             << num(e.coinc_total_cps() * T) << "," << num(e.qber) << "\n";
  }
  return 0;
}

void write_bits(const std::string& path, const std::vector<std::uint8_t>& bits) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write '" + path + "'");
  for (auto b : bits) f.put(b ? '1' : '0');
  f.put('\n');
}

int cmd_sync(const Common& c, const std::string& space_path, const std::string& ground_path,
             std::optional<double> beacon_rate, std::optional<double> window_s, bool sift, const std::string& key_out,
             const std::string& key_out_ground) {
  const Scenario s = scenario_of(c);
  BeaconParams beacon = s.beacon;
  if (beacon_rate) beacon.rate_hz = *beacon_rate;
  validate(beacon);
  const TimestampStream space = read_timestamps(space_path);
  const TimestampStream ground = read_timestamps(ground_path);
  const SyncResult r = sync_clocks(space, ground, beacon, window_s.value_or(s.sim.search_window_s));

  json j{{"offset_ps", r.offset_ps},
         {"drift_ppm", r.drift_ppm},
         {"drift_rate_ppm_per_s", r.clock.drift_rate_ppm_per_s},
         {"residual_rms_ps", r.residual_rms_ps},
         {"correlation_peak_significance", r.correlation_peak_significance},
         {"beacon_matches", r.beacon_matches},
         {"alias_shift", r.alias_shift},
         {"photon_peak_shift_ps", r.photon_peak_shift_ps},
         {"segments", r.segments.size()}};
  if (sift || !key_out.empty() || !key_out_ground.empty()) {
    const TimestampStream g = correct_ground(ground, r.clock);
    const auto pairs = find_coincidences(space, g, s.params.protocol.tau_c_ns);
    double t_end = 0.0;
    if (!space.empty()) t_end = static_cast<double>(space.back().time_ps) * 1e-12;
    SiftedKey key;
    const SiftReport rep = sift_and_estimate(pairs, space, g, t_end, {}, &key);
    j["sift"] = {{"n_coincidences", rep.n_coincidences},
                 {"n_sifted", rep.n_sifted},
                 {"n_errors", rep.n_errors},
                 {"qber_est", rep.qber_est},
                 {"coincidence_rate_cps", rep.coincidence_rate_cps}};
    if (!key_out.empty()) write_bits(key_out, key.space_bits);
    if (!key_out_ground.empty()) write_bits(key_out_ground, key.ground_bits);
  }
  Output out(c.out);
  if (c.format == "json") {
    out.os() << j.dump(2) << "\n";
  } else {
    out.os() << "t_s,offset_ps,matches\n";
    for (const auto& seg : r.segments) out.os() << num(seg.t_s) << "," << num(seg.offset_ps) << "," << seg.matches << "\n";
    std::cerr << j.dump(2) << "\n";
  }
  return 0;
}

json to_json(const CurveFit& f) {
  return {{"amplitude", f.amplitude},   {"phase_deg", f.phase_deg},
          {"offset", f.offset},         {"visibility", f.visibility},
          {"visibility_err", f.visibility_err}, {"clamped_points", f.clamped_points}};
}

int cmd_chsh(const Common& c, const std::string& in) {
  const Table t = read_table(in);
  const int cs = t.need("setting"), ca = t.need("angle_deg"), cc = t.need("coincidences");
  const int cacc = t.column("accidentals");
  std::array<std::vector<CurvePoint>, 4> curves;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& name = t.rows[r][cs];
    std::size_t k = 0;
    while (k < 4 && name != kSettingNames[k]) ++k;
    if (k == 4) throw ParseError(in + ": unknown setting '" + name + "' (H, V, D, A)");
    curves[k].push_back({cell(t, r, ca), cell(t, r, cc), cacc >= 0 ? cell(t, r, cacc) : 0.0});
  }
  const ChshFit f = fit_correlation_curves(curves);
  Output out(c.out);
  if (c.format == "json") {
    json settings;
    for (std::size_t k = 0; k < 4; ++k) settings[kSettingNames[k]] = to_json(f.settings[k]);
    out.os() << json{{"settings", settings},
                     {"visibility_hv", f.visibility_hv},
                     {"visibility_da", f.visibility_da},
                     {"s_value", f.s_value},
                     {"s_err", f.s_err}}
                    .dump(2)
             << "\n";
  } else {
    out.os() << "setting,amplitude,phase_deg,offset,visibility,visibility_err\n";
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& s = f.settings[k];
      out.os() << kSettingNames[k] << "," << num(s.amplitude) << "," << num(s.phase_deg) << "," << num(s.offset) << ","
               << num(s.visibility) << "," << num(s.visibility_err) << "\n";
    }
    std::cerr << "S = " << num(f.s_value) << " +- " << num(f.s_err) << "\n";
  }
  return 0;
}

int cmd_darkcount(const Common& c, const std::string& in, double at_temp) {
  const Table t = read_table(in);
  const int ct = t.need("temp_c"), cd = t.need("dark_cps");
  const int cday = t.column("day");
  std::map<double, std::vector<DarkSample>> by_day;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    by_day[cday >= 0 ? cell(t, r, cday) : 0.0].push_back({cell(t, r, ct), cell(t, r, cd)});

  std::vector<EpochValue> epochs;
  std::vector<std::pair<double, DarkCountFit>> fits;
  for (const auto& [day, samples] : by_day) {
    const DarkCountFit f = fit_darkcounts(samples);
    fits.emplace_back(day, f);
    epochs.push_back({day, extrapolate(f, at_temp)});
  }
  const double degradation = epochs.size() >= 3 ? degradation_rate(epochs) : 0.0;
  Output out(c.out);
  if (c.format == "json") {
    auto one = [&](const DarkCountFit& f) {
      return json{{"amp_cps", f.amp_cps},
                  {"slope_per_degC", f.slope_per_degC},
                  {"extrapolated_cps_at_10C", f.extrapolated_cps_at_10C},
                  {"extrapolate_temp_c", at_temp},
                  {"extrapolated_cps", extrapolate(f, at_temp)},
                  {"degradation_cps_per_day", degradation},
                  {"fit_rms", f.fit_rms}};
    };
    if (fits.size() == 1) {
      out.os() << one(fits.front().second).dump(2) << "\n";
    } else {
      json arr = json::array();
      for (const auto& [day, f] : fits) {
        json e = one(f);
        e["day"] = day;
        arr.push_back(e);
      }
      out.os() << json{{"epochs", arr}, {"degradation_cps_per_day", degradation}}.dump(2) << "\n";
    }
  } else {
    out.os() << "day,amp_cps,slope_per_degC,extrapolated_cps,fit_rms,degradation_cps_per_day\n";
    for (const auto& [day, f] : fits)
      out.os() << num(day) << "," << num(f.amp_cps) << "," << num(f.slope_per_degC) << "," << num(extrapolate(f, at_temp))
               << "," << num(f.fit_rms) << "," << num(degradation) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qkdlink: space-to-ground entanglement QKD link model"};
  app.require_subcommand(1);

  Common pass_c, sweep_c, fk_c, sim_c, sync_c, chsh_c, dark_c;

  auto* pass = app.add_subcommand("pass", "integrate one pass");
  add_common(pass, pass_c);
  bool geometry_only = false, with_link = false;
  std::string pass_summary;
  pass->add_flag("--geometry-only", geometry_only, "only t, elevation, range");
  pass->add_flag("--with-link", with_link, "add loss breakdown columns");
  pass->add_option("--summary", pass_summary, "PassReport JSON file (default: stderr/stdout)");

  auto* sweep = app.add_subcommand("sweep", "parameter sweep over passes");
  add_common(sweep, sweep_c);
  std::string spec_path, sweep_summary;
  unsigned threads = 0;
  sweep->add_option("--spec", spec_path, "sweep spec JSON")->required();
  sweep->add_option("--summary", sweep_summary, "argmax JSON file");
  sweep->add_option("--threads", threads, "worker threads (0 = all cores)");

  auto* fk = app.add_subcommand("finite-key", "finite-size key length");
  add_common(fk, fk_c);
  std::optional<double> fk_n, fk_q;
  bool fk_map = false;
  double n_min = 1e4, n_max = 1e7, q_max = 0.12;
  std::size_t n_steps = 31, q_steps = 25;
  fk->add_option("--n", fk_n, "sifted bits");
  fk->add_option("--qber", fk_q, "average QBER");
  fk->add_flag("--map", fk_map, "emit the n x QBER grid");
  fk->add_option("--n-min", n_min);
  fk->add_option("--n-max", n_max);
  fk->add_option("--n-steps", n_steps);
  fk->add_option("--qber-max", q_max);
  fk->add_option("--qber-steps", q_steps);

  auto* sim = app.add_subcommand("simulate-events", "Monte Carlo timestamp streams");
  add_common(sim, sim_c, true);
  std::string out_space, out_ground, truth;
  std::optional<double> duration;
  sim->add_option("--out-space", out_space, "space timestamp file")->required();
  sim->add_option("--out-ground", out_ground, "ground timestamp file")->required();
  sim->add_option("--truth", truth, "truth CSV");
  sim->add_option("--duration", duration, "seconds (overrides sim.duration_s)");

  auto* sync = app.add_subcommand("sync", "clock sync, coincidences and sifting");
  add_common(sync, sync_c);
  sync_c.format = "json";
  std::string space_path, ground_path, key_out, key_out_ground;
  std::optional<double> beacon_rate, window_s;
  bool do_sift = false;
  sync->add_option("--space", space_path)->required();
  sync->add_option("--ground", ground_path)->required();
  sync->add_option("--beacon-rate", beacon_rate, "Hz");
  sync->add_option("--window", window_s, "offset search half-width, s");
  sync->add_flag("--sift", do_sift);
  sync->add_option("--key-out", key_out, "space-side sifted bits");
  sync->add_option("--key-out-ground", key_out_ground, "ground-side sifted bits");

  auto* chsh = app.add_subcommand("chsh-fit", "correlation curves -> S");
  add_common(chsh, chsh_c);
  chsh_c.format = "json";
  std::string chsh_in;
  chsh->add_option("--in", chsh_in, "CSV: setting,angle_deg,coincidences[,accidentals]")->required();

  auto* dark = app.add_subcommand("darkcount-fit", "exponential dark-count fit");
  add_common(dark, dark_c);
  dark_c.format = "json";
  std::string dark_in;
  double at_temp = 10.0;
  dark->add_option("--in", dark_in, "CSV: temp_c,dark_cps[,day]")->required();
  dark->add_option("--extrapolate", at_temp, "temperature, degC");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pass) return cmd_pass(pass_c, geometry_only, with_link, pass_summary);
    if (*sweep) return cmd_sweep(sweep_c, spec_path, sweep_summary, threads);
    if (*fk) return cmd_finite_key(fk_c, fk_n, fk_q, fk_map, n_min, n_max, n_steps, q_max, q_steps);
    if (*sim) return cmd_simulate(sim_c, out_space, out_ground, truth, duration);
    if (*sync) return cmd_sync(sync_c, space_path, ground_path, beacon_rate, window_s, do_sift, key_out, key_out_ground);
    if (*chsh) return cmd_chsh(chsh_c, chsh_in);
    if (*dark) return cmd_darkcount(dark_c, dark_in, at_temp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
