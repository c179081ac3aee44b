#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "qkdlink/error.hpp"
#include "qkdlink/numeric.hpp"
#include "qkdlink/params.hpp"

namespace qkdlink {

struct FiniteKeyInput {
  double n_raw = 0.0;  // sifted bits accumulated
  double qber_avg = 0.0;
  double eps_cor = 1e-10;
  double eps_sec = 1e-10;
  double f = 1.1;
  double pe_fraction = 0.5;

  static FiniteKeyInput from(const ProtocolParams& proto, double n_raw, double qber_avg) {
    return {n_raw, qber_avg, proto.eps_cor, proto.eps_sec, proto.ec_efficiency, proto.pe_fraction};
  }
};

inline void validate(const FiniteKeyInput& in) {
  if (!(in.n_raw >= 0.0)) throw ValidationError("finite key: n_raw ∉ [0,∞)");
  if (!(in.qber_avg >= 0.0 && in.qber_avg <= 0.5)) throw ValidationError("finite key: qber_avg ∉ [0,0.5]");
  if (!(in.eps_cor > 0.0 && in.eps_cor < 1.0)) throw ValidationError("finite key: eps_cor ∉ (0,1)");
  if (!(in.eps_sec > 0.0 && in.eps_sec < 1.0)) throw ValidationError("finite key: eps_sec ∉ (0,1)");
  if (!(in.f >= 1.0)) throw ValidationError("finite key: f ∉ [1,∞)");
  if (!(in.pe_fraction > 0.0 && in.pe_fraction < 1.0)) throw ValidationError("finite key: pe_fraction ∉ (0,1)");
}

/// Statistical deviation between the phase-error rate of the key bits (m of them) and
/// the error rate observed on the k parameter-estimation bits.
inline double phase_error_penalty(double m, double k, double eps_sec) {
  return std::sqrt((m + k) / (m * k) * (k + 1.0) / k * std::log(2.0 / eps_sec));
}

/// Extractable key length (bits) from n_raw sifted bits with average error rate Q.
///
/// A share pe_fraction of the sifted bits is disclosed to bound the phase error; the
/// remaining m bits are corrected (leaking f·m·h(Q)) and hashed down to
///   l = m (1 − h(Q + mu)) − f m h(Q) − log2(2 / (eps_sec² eps_cor)).
inline std::uint64_t finite_key_length(const FiniteKeyInput& in) {
  validate(in);
  const double k = std::floor(in.n_raw * in.pe_fraction);
  const double m = in.n_raw - k;
  if (k < 1.0 || m < 1.0) return 0;
  const double mu = phase_error_penalty(m, k, in.eps_sec);
  const double q_phase = std::min(in.qber_avg + mu, 0.5);
  const double len = m * (1.0 - binary_entropy(q_phase)) - in.f * m * binary_entropy(in.qber_avg) -
                     std::log2(2.0 / (in.eps_sec * in.eps_sec * in.eps_cor));
  return len > 0.0 ? static_cast<std::uint64_t>(std::floor(len)) : 0;
}

/// Number of complete 256-bit keys in a key of `bits` length.
inline std::uint64_t aes256_keys(std::uint64_t bits) { return bits / 256; }

/// Row-major matrix: rows follow q_grid, columns follow n_grid.
struct FiniteKeyMap {
  std::vector<double> n_grid;
  std::vector<double> q_grid;
  std::vector<std::uint64_t> bits;

  std::uint64_t at(std::size_t qi, std::size_t ni) const { return bits[qi * n_grid.size() + ni]; }
};

inline FiniteKeyMap finite_key_map(std::span<const double> n_grid, std::span<const double> q_grid,
                                   const ProtocolParams& proto) {
  if (n_grid.empty() || q_grid.empty()) throw ValidationError("finite key map: grids must be non-empty");
  FiniteKeyMap map{{n_grid.begin(), n_grid.end()}, {q_grid.begin(), q_grid.end()}, {}};
  map.bits.reserve(n_grid.size() * q_grid.size());
  for (double q : q_grid)
    for (double n : n_grid) map.bits.push_back(finite_key_length(FiniteKeyInput::from(proto, n, q)));
  return map;
}

}  // namespace qkdlink
