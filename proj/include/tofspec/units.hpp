#pragma once

#include <cmath>
#include <compare>

namespace tofspec {

/// Speed of light in nm/ps.
inline constexpr double kSpeedOfLightNmPerPs = 2.99792458e5;

/// FWHM of a Gaussian in units of its standard deviation, 2*sqrt(2 ln 2).
inline const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::log(2.0));

/// Vacuum wavelength in nanometres.
struct WavelengthNm {
  double value = 0.0;

  constexpr WavelengthNm() = default;
  constexpr explicit WavelengthNm(double nm) : value(nm) {}

  bool valid() const { return std::isfinite(value) && value > 0.0; }
  friend constexpr auto operator<=>(WavelengthNm, WavelengthNm) = default;
};

inline double fwhm_to_sigma(double fwhm) { return fwhm / kFwhmPerSigma; }
inline double sigma_to_fwhm(double sigma) { return sigma * kFwhmPerSigma; }

}  // namespace tofspec
