#pragma once

#include <fstream>
#include <istream>
#include <string>
#include <type_traits>

#include "qkdlink/clock.hpp"
#include "qkdlink/error.hpp"
#include "qkdlink/event_sim.hpp"
#include "qkdlink/params.hpp"
#include "qkdlink/trade_studies.hpp"

namespace qkdlink {

struct SimSettings {
  double duration_s = 10.0;
  double loss_db = 0.0;           // static link
  bool use_pass_profile = false;  // take the loss from the configured pass instead
  double extra_loss_db = 0.0;     // added to every pass sample
  double search_window_s = 2e-3;  // sync search half-width
};

/// A config document: SystemParams keys plus sim.*, clock.* and beacon.* sections.
struct Scenario {
  SystemParams params;
  SimSettings sim;
  ClockModel clock;
  BeaconParams beacon;

  LossProfile loss_profile() const {
    if (!sim.use_pass_profile) return LossProfile::constant(sim.loss_db);
    LossProfile lp = pass_loss_profile(params);
    for (double& l : lp.loss_db) l += sim.extra_loss_db;
    return lp;
  }
};

inline Scenario parse_scenario(std::istream& in, std::string_view origin = "<config>") {
  KeyValues kv = parse_key_values(in, origin);
  Scenario s;
  auto take = [&](const char* key, auto& dst) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if constexpr (std::is_same_v<std::remove_reference_t<decltype(dst)>, bool>)
      dst = parse_flag(key, it->second);
    else
      dst = parse_number(key, it->second);
    kv.erase(it);
  };
  take("sim.duration_s", s.sim.duration_s);
  take("sim.loss_db", s.sim.loss_db);
  take("sim.use_pass_profile", s.sim.use_pass_profile);
  take("sim.extra_loss_db", s.sim.extra_loss_db);
  take("sim.search_window_s", s.sim.search_window_s);
  take("clock.offset_ps", s.clock.offset_ps);
  take("clock.drift_ppm", s.clock.drift_ppm);
  take("clock.drift_rate_ppm_per_s", s.clock.drift_rate_ppm_per_s);
  take("beacon.enabled", s.beacon.enabled);
  take("beacon.rate_hz", s.beacon.rate_hz);
  take("beacon.pulse_width_ns", s.beacon.pulse_width_ns);
  take("beacon.photons_detected_per_pulse_ground", s.beacon.photons_detected_per_pulse_ground);
  s.params = take_params(kv);
  if (!kv.empty()) throw ParseError(std::string(origin) + ": unknown key '" + kv.begin()->first + "'");
  if (!(s.sim.duration_s > 0.0)) throw ValidationError("sim.duration_s ∉ (0,∞)");
  if (!(s.sim.loss_db >= 0.0)) throw ValidationError("sim.loss_db ∉ [0,∞)");
  if (!(s.sim.search_window_s > 0.0)) throw ValidationError("sim.search_window_s ∉ (0,∞)");
  validate(s.beacon);
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  return parse_scenario(in, path);
}

}  // namespace qkdlink
