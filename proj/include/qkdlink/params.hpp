#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "qkdlink/error.hpp"

namespace qkdlink {

// Defaults are the space-to-ground model inputs of the reference design. Where the
// design quotes a pair of values "space/ground" the first goes to the on-board arm.

struct SourceParams {
  double pair_rate = 25e6;               // pairs/s
  double visibility = 0.98;
  double wavelength_signal_nm = 780.0;   // on-board arm
  double wavelength_idler_nm = 842.0;    // downlinked arm
  double bandwidth_nm = 10.0;
  double space_singles_cap_cps = 0.0;    // time-tagger throughput limit, 0 = unlimited
  bool operator==(const SourceParams&) const = default;
};

struct DetectorParams {
  double efficiency = 0.25;        // pair-to-singles ratio of this arm
  double dark_cps = 500.0;         // per detector
  double dead_time_ns = 50.0;
  double jitter_ps = 320.0;
  bool jitter_is_fwhm = false;     // false: jitter_ps is the Gaussian sigma
  double afterpulse_prob = 0.05;

  double jitter_sigma_ps() const { return jitter_is_fwhm ? jitter_ps / 2.354820045 : jitter_ps; }
  bool operator==(const DetectorParams&) const = default;
};

struct LinkParams {
  double tx_aperture_m = 0.09;
  double rx_aperture_m = 0.6;
  double beam_quality_m2 = 1.6;
  double zenith_atm_loss_db = 3.0;
  double pointing_jitter_urad = 5.0;  // per axis, 1 sigma
  double optics_efficiency = 0.5;
  double background_cps = 1300.0;     // total over the ground detectors
  double polarization_error = 0.0;    // constant QBER allowance (frame rotation, state mixing)
  bool operator==(const LinkParams&) const = default;
};

struct ProtocolParams {
  double ec_efficiency = 1.1;
  double basis_factor = 0.5;
  double tau_c_ns = 1.0;
  double eps_cor = 1e-10;
  double eps_sec = 1e-10;
  double pe_fraction = 0.5;  // share of sifted bits spent on parameter estimation
  double qber_cap = 0.5;     // samples above this instantaneous QBER are discarded
  bool operator==(const ProtocolParams&) const = default;
};

struct OrbitParams {
  double altitude_km = 500.0;
  double max_elevation_deg = 90.0;
  double earth_radius_km = 6371.0;
  double sample_dt_s = 1.0;
  double min_elevation_deg = 10.0;
  double gm_km3_s2 = 398600.44;
  bool operator==(const OrbitParams&) const = default;
};

struct SystemParams {
  SourceParams source;
  DetectorParams detector_space{.dark_cps = 100000.0};
  DetectorParams detector_ground{};
  LinkParams link;
  ProtocolParams protocol;
  OrbitParams orbit;
  bool operator==(const SystemParams&) const = default;
};

// ---------------------------------------------------------------------------
// Key registry. One entry per dotted config key; shared by the config reader,
// the writer and sweep parameter-path resolution.

struct Bound {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;
  bool hi_open = false;

  bool contains(double v) const {
    if (std::isnan(v)) return false;
    const bool above = lo_open ? v > lo : v >= lo;
    const bool below = hi_open ? v < hi : v <= hi;
    return above && below;
  }

  std::string describe() const {
    auto num = [](double v) {
      if (std::isinf(v)) return std::string(v > 0 ? "∞" : "-∞");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", v);
      return std::string(buf);
    };
    return std::string(lo_open ? "(" : "[") + num(lo) + "," + num(hi) + (hi_open ? ")" : "]");
  }
};

struct ParamField {
  std::string key;
  std::function<double&(SystemParams&)> number;
  std::function<bool&(SystemParams&)> flag;
  Bound bound;
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr Bound kFraction{0.0, 1.0};
inline constexpr Bound kNonNegative{0.0, kInf};
inline constexpr Bound kPositive{0.0, kInf, true};

#define QKDLINK_NUM(KEY, MEMBER, BOUND) \
  ParamField{KEY, [](SystemParams& p) -> double& { return p.MEMBER; }, {}, BOUND}

inline std::vector<ParamField> make_registry() {
  std::vector<ParamField> f;
  f.push_back(QKDLINK_NUM("source.pair_rate", source.pair_rate, kNonNegative));
  f.push_back(QKDLINK_NUM("source.visibility", source.visibility, kFraction));
  f.push_back(QKDLINK_NUM("source.wavelength_signal_nm", source.wavelength_signal_nm, kPositive));
  f.push_back(QKDLINK_NUM("source.wavelength_idler_nm", source.wavelength_idler_nm, kPositive));
  f.push_back(QKDLINK_NUM("source.bandwidth_nm", source.bandwidth_nm, kPositive));
  f.push_back(QKDLINK_NUM("source.space_singles_cap_cps", source.space_singles_cap_cps, kNonNegative));
  for (const auto* side : {"detector_space", "detector_ground"}) {
    const bool space = std::string_view(side) == "detector_space";
    auto det = [space](SystemParams& p) -> DetectorParams& { return space ? p.detector_space : p.detector_ground; };
    const std::string prefix = std::string(side) + ".";
    auto key = [&prefix](const char* name) { return prefix + name; };
    f.push_back({key("efficiency"), [det](SystemParams& p) -> double& { return det(p).efficiency; }, {}, kFraction});
    f.push_back({key("dark_cps"), [det](SystemParams& p) -> double& { return det(p).dark_cps; }, {}, kNonNegative});
    f.push_back({key("dead_time_ns"), [det](SystemParams& p) -> double& { return det(p).dead_time_ns; }, {}, kNonNegative});
    f.push_back({key("jitter_ps"), [det](SystemParams& p) -> double& { return det(p).jitter_ps; }, {}, kNonNegative});
    f.push_back({key("jitter_is_fwhm"), {}, [det](SystemParams& p) -> bool& { return det(p).jitter_is_fwhm; }, {}});
    f.push_back({key("afterpulse_prob"), [det](SystemParams& p) -> double& { return det(p).afterpulse_prob; }, {}, Bound{0.0, 1.0, false, true}});
  }
  f.push_back(QKDLINK_NUM("link.tx_aperture_m", link.tx_aperture_m, kPositive));
  f.push_back(QKDLINK_NUM("link.rx_aperture_m", link.rx_aperture_m, kPositive));
  f.push_back(QKDLINK_NUM("link.beam_quality_m2", link.beam_quality_m2, (Bound{1.0, kInf})));
  f.push_back(QKDLINK_NUM("link.zenith_atm_loss_db", link.zenith_atm_loss_db, kNonNegative));
  f.push_back(QKDLINK_NUM("link.pointing_jitter_urad", link.pointing_jitter_urad, kNonNegative));
  f.push_back(QKDLINK_NUM("link.optics_efficiency", link.optics_efficiency, (Bound{0.0, 1.0, true, false})));
  f.push_back(QKDLINK_NUM("link.background_cps", link.background_cps, kNonNegative));
  f.push_back(QKDLINK_NUM("link.polarization_error", link.polarization_error, (Bound{0.0, 0.5})));
  f.push_back(QKDLINK_NUM("protocol.ec_efficiency", protocol.ec_efficiency, (Bound{1.0, kInf})));
  f.push_back(QKDLINK_NUM("protocol.basis_factor", protocol.basis_factor, kFraction));
  f.push_back(QKDLINK_NUM("protocol.tau_c_ns", protocol.tau_c_ns, kPositive));
  f.push_back(QKDLINK_NUM("protocol.eps_cor", protocol.eps_cor, (Bound{0.0, 1.0, true, true})));
  f.push_back(QKDLINK_NUM("protocol.eps_sec", protocol.eps_sec, (Bound{0.0, 1.0, true, true})));
  f.push_back(QKDLINK_NUM("protocol.pe_fraction", protocol.pe_fraction, (Bound{0.0, 1.0, true, true})));
  f.push_back(QKDLINK_NUM("protocol.qber_cap", protocol.qber_cap, (Bound{0.0, 0.5, true, false})));
  f.push_back(QKDLINK_NUM("orbit.altitude_km", orbit.altitude_km, kPositive));
  f.push_back(QKDLINK_NUM("orbit.max_elevation_deg", orbit.max_elevation_deg, (Bound{0.0, 90.0})));
  f.push_back(QKDLINK_NUM("orbit.earth_radius_km", orbit.earth_radius_km, kPositive));
  f.push_back(QKDLINK_NUM("orbit.sample_dt_s", orbit.sample_dt_s, kPositive));
  f.push_back(QKDLINK_NUM("orbit.min_elevation_deg", orbit.min_elevation_deg, (Bound{0.0, 90.0})));
  f.push_back(QKDLINK_NUM("orbit.gm_km3_s2", orbit.gm_km3_s2, kPositive));
  return f;
}

#undef QKDLINK_NUM

}  // namespace detail

inline const std::vector<ParamField>& param_registry() {
  static const std::vector<ParamField> registry = detail::make_registry();
  return registry;
}

inline const ParamField* find_param(std::string_view key) {
  for (const auto& f : param_registry())
    if (f.key == key) return &f;
  return nullptr;
}

/// Writable reference to a numeric parameter addressed by dotted path.
inline double& param_ref(SystemParams& p, std::string_view key) {
  const ParamField* f = find_param(key);
  if (f == nullptr || !f->number) throw ValidationError("unknown numeric parameter path '" + std::string(key) + "'");
  return f->number(p);
}

/// Throws ValidationError naming the first offending key and its bound.
inline void validate(const SystemParams& params) {
  SystemParams p = params;
  for (const auto& f : param_registry()) {
    if (!f.number) continue;
    const double v = f.number(p);
    if (!f.bound.contains(v)) {
      char got[32];
      std::snprintf(got, sizeof got, "%g", v);
      throw ValidationError(f.key + " ∉ " + f.bound.describe() + " (got " + got + ")");
    }
  }
  if (p.orbit.min_elevation_deg > p.orbit.max_elevation_deg)
    throw ValidationError("orbit.max_elevation_deg must be ≥ orbit.min_elevation_deg");
}

// ---------------------------------------------------------------------------
// Flat key-value documents: one `dotted.key = value` per line, '#' comments.

using KeyValues = std::map<std::string, std::string, std::less<>>;

inline KeyValues parse_key_values(std::istream& in, std::string_view origin = "<config>") {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    auto sep = s.find_first_of("=:");
    if (sep == std::string_view::npos)
      throw ParseError(std::string(origin) + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(s.substr(0, sep));
    const auto value = trim(s.substr(sep + 1));
    if (key.empty() || value.empty())
      throw ParseError(std::string(origin) + ":" + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(std::string(key), std::string(value)).second)
      throw ParseError(std::string(origin) + ":" + std::to_string(lineno) + ": duplicate key '" + std::string(key) + "'");
  }
  return kv;
}

inline double parse_number(std::string_view key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw ParseError("value of '" + std::string(key) + "' is not a number: '" + text + "'");
  return v;
}

inline bool parse_flag(std::string_view key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError("value of '" + std::string(key) + "' is not a boolean: '" + text + "'");
}

/// Applies every SystemParams key present in `kv` and erases it. Keys that are left
/// over belong to other sections (or are typos) and are the caller's concern.
inline SystemParams take_params(KeyValues& kv) {
  SystemParams p;
  for (const auto& f : param_registry()) {
    auto it = kv.find(f.key);
    if (it == kv.end()) continue;
    if (f.number)
      f.number(p) = parse_number(f.key, it->second);
    else
      f.flag(p) = parse_flag(f.key, it->second);
    kv.erase(it);
  }
  validate(p);
  return p;
}

inline SystemParams parse_params(std::istream& in, std::string_view origin = "<config>") {
  KeyValues kv = parse_key_values(in, origin);
  SystemParams p = take_params(kv);
  if (!kv.empty()) throw ParseError("unknown key '" + kv.begin()->first + "'");
  return p;
}

inline SystemParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  return parse_params(in, path);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_params(std::ostream& out, const SystemParams& params) {
  SystemParams p = params;
  std::string section;
  for (const auto& f : param_registry()) {
    const auto dot = f.key.find('.');
    if (f.key.substr(0, dot) != section) {
      if (!section.empty()) out << '\n';
      section = f.key.substr(0, dot);
    }
    out << f.key << " = " << (f.number ? format_double(f.number(p)) : (f.flag(p) ? "true" : "false")) << '\n';
  }
}

inline void save_params(const SystemParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write config '" + path + "'");
  write_params(out, p);
}

}  // namespace qkdlink
