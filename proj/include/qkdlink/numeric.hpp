#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "qkdlink/error.hpp"

namespace qkdlink {

/// Binary Shannon entropy in bits. Clamped to [0, 1] outside (0, 1).
inline double binary_entropy(double q) {
  if (q <= 0.0 || q >= 1.0) return 0.0;
  return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

inline double db_to_transmittance(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

inline double transmittance_to_db(double t) { return -10.0 * std::log10(t); }

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Result of an (optionally weighted) linear least-squares fit y ~ X beta.
template <std::size_t N>
struct LinearFit {
  std::array<double, N> coef{};
  std::array<std::array<double, N>, N> cov{};  // (X^T W X)^-1
  double rss = 0.0;                            // weighted residual sum of squares
  std::size_t n = 0;
};

namespace detail {

// Gauss-Jordan inverse of a small symmetric positive matrix.
template <std::size_t N>
std::array<std::array<double, N>, N> invert(std::array<std::array<double, N>, N> a) {
  std::array<std::array<double, N>, N> inv{};
  for (std::size_t i = 0; i < N; ++i) inv[i][i] = 1.0;
  double scale = 0.0;
  for (auto& row : a)
    for (double v : row) scale = std::max(scale, std::abs(v));
  for (std::size_t col = 0; col < N; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < N; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) <= 1e-13 * scale) throw FitError("singular normal matrix");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double d = a[col][col];
    for (std::size_t c = 0; c < N; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < N; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (std::size_t c = 0; c < N; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

}  // namespace detail

/// Weighted least squares via normal equations. `basis(i)` returns the N regressors
/// for sample i; weights may be empty (unit weights).
template <std::size_t N, typename Basis>
LinearFit<N> least_squares(std::size_t n, Basis&& basis, std::span<const double> y,
                           std::span<const double> w = {}) {
  if (n < N) throw FitError("not enough samples for fit");
  std::array<std::array<double, N>, N> xtx{};
  std::array<double, N> xty{};
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, N> x = basis(i);
    const double wi = w.empty() ? 1.0 : w[i];
    for (std::size_t r = 0; r < N; ++r) {
      xty[r] += wi * x[r] * y[i];
      for (std::size_t c = 0; c < N; ++c) xtx[r][c] += wi * x[r] * x[c];
    }
  }
  LinearFit<N> fit;
  fit.cov = detail::invert<N>(xtx);
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t c = 0; c < N; ++c) fit.coef[r] += fit.cov[r][c] * xty[c];
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, N> x = basis(i);
    double pred = 0.0;
    for (std::size_t r = 0; r < N; ++r) pred += fit.coef[r] * x[r];
    const double wi = w.empty() ? 1.0 : w[i];
    fit.rss += wi * (y[i] - pred) * (y[i] - pred);
  }
  fit.n = n;
  return fit;
}

/// Ordinary straight-line fit y = intercept + slope * x.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double rms = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const auto fit = least_squares<2>(x.size(), [&](std::size_t i) { return std::array{1.0, x[i]}; }, y);
  return {fit.coef[0], fit.coef[1], std::sqrt(fit.rss / static_cast<double>(x.size()))};
}

/// n points from lo to hi inclusive, linear or logarithmic spacing. n == 1 yields {lo}.
inline std::vector<double> spaced(double lo, double hi, std::size_t n, bool log_scale) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = log_scale ? std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo))) : lo + u * (hi - lo);
  }
  return out;
}

}  // namespace qkdlink
