#pragma once

#include <algorithm>
#include <cmath>

#include "qkdlink/numeric.hpp"
#include "qkdlink/orbit.hpp"
#include "qkdlink/params.hpp"

namespace qkdlink {

struct LinkBreakdown {
  double geometric_loss_db = 0.0;
  double pointing_loss_db = 0.0;
  double atmospheric_loss_db = 0.0;
  double optics_loss_db = 0.0;
  double total_loss_db = 0.0;
};

/// 1/e² intensity radius (m) of a Gaussian beam with waist tx_aperture/2 and
/// far-field half-divergence m2·λ/(π·w0) after `range_m`.
inline double beam_radius_m(double range_m, double tx_aperture_m, double m2, double wavelength_nm) {
  const double w0 = tx_aperture_m / 2.0;
  const double theta = m2 * wavelength_nm * 1e-9 / (std::numbers::pi * w0);
  return std::hypot(w0, theta * range_m);
}

/// Fraction of the transmitted power collected by a circular receiver of diameter
/// rx_aperture_m, averaged over a Gaussian pointing error of std pointing_jitter per
/// axis.
///
/// The mean of the displaced Gaussian profile over a circularly symmetric Gaussian
/// offset of per-axis std s is again Gaussian with w_eff² = w² + 4 s², so the average
/// bucket capture is 1 − exp(−2 a² / w_eff²) with a the receiver radius.
inline double geometric_collection(double range_km, double tx_aperture_m, double rx_aperture_m, double m2,
                                   double wavelength_nm, double pointing_jitter_urad) {
  const double range_m = range_km * 1e3;
  const double w = beam_radius_m(range_m, tx_aperture_m, m2, wavelength_nm);
  const double offset_sigma = pointing_jitter_urad * 1e-6 * range_m;
  const double w_eff2 = w * w + 4.0 * offset_sigma * offset_sigma;
  const double a = rx_aperture_m / 2.0;
  return -std::expm1(-2.0 * a * a / w_eff2);
}

/// Airmass-scaled atmospheric attenuation (plane-parallel, 1/sin ε).
inline double atmospheric_loss_db(double elevation_deg, const LinkParams& link) {
  return link.zenith_atm_loss_db / std::sin(deg2rad(elevation_deg));
}

inline LinkBreakdown channel_loss(const PassSample& sample, const LinkParams& link, double wavelength_nm) {
  LinkBreakdown b;
  const double diffraction_only = geometric_collection(sample.slant_range_km, link.tx_aperture_m, link.rx_aperture_m,
                                                       link.beam_quality_m2, wavelength_nm, 0.0);
  const double with_pointing = geometric_collection(sample.slant_range_km, link.tx_aperture_m, link.rx_aperture_m,
                                                    link.beam_quality_m2, wavelength_nm, link.pointing_jitter_urad);
  b.geometric_loss_db = std::max(0.0, transmittance_to_db(diffraction_only));
  b.pointing_loss_db = std::max(0.0, transmittance_to_db(with_pointing) - b.geometric_loss_db);
  b.atmospheric_loss_db = atmospheric_loss_db(sample.elevation_deg, link);
  b.optics_loss_db = transmittance_to_db(link.optics_efficiency);
  b.total_loss_db = b.geometric_loss_db + b.pointing_loss_db + b.atmospheric_loss_db + b.optics_loss_db;
  return b;
}

/// Link loss for the downlinked (idler) arm of a configured system.
inline LinkBreakdown channel_loss(const PassSample& sample, const SystemParams& p) {
  return channel_loss(sample, p.link, p.source.wavelength_idler_nm);
}

}  // namespace qkdlink
