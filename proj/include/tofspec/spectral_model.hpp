#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tofspec/rng.hpp"
#include "tofspec/units.hpp"

namespace tofspec::spectral {

/// Normalized Gaussian line, density per nm.
struct GaussianLine {
  WavelengthNm center{830.0};
  double fwhm_nm = 1.0;
};

/// Single photon in two time-delayed copies: the envelope spectrum modulated
/// by spectral interference fringes of period center^2 / (c * delay).
struct DoublePulse {
  GaussianLine envelope;
  double delay_ps = 11.0;
  double visibility = 1.0;  // [0, 1]
  double phase_rad = 0.0;
};

/// Density tabulated on a strictly increasing grid, linearly interpolated and
/// normalized to unit area at construction.
class TabulatedSpectrum {
 public:
  TabulatedSpectrum(std::vector<double> grid_nm, std::vector<double> density);

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& density() const { return density_; }
  double operator()(double lambda_nm) const;

 private:
  std::vector<double> grid_;
  std::vector<double> density_;
};

/// Bivariate Gaussian joint spectrum of a signal/idler photon pair.
struct PairGaussian {
  GaussianLine signal;
  GaussianLine idler;
  double correlation = 0.0;  // (-1, 1)
};

using SpectralSource = std::variant<GaussianLine, DoublePulse, TabulatedSpectrum, PairGaussian>;

struct FringeParams {
  double period_nm = 0.0;
  double visibility = 0.0;
  double phase_rad = 0.0;
  WavelengthNm envelope_center;
  double envelope_fwhm_nm = 0.0;
};

/// Throws ConfigError when a source violates its invariants.
void validate(const SpectralSource& source);

bool is_pair(const SpectralSource& source);

/// Probability density per nm at `lambda`; zero outside the support.
/// For a PairGaussian this is the signal marginal.
double eval_density(const SpectralSource& source, WavelengthNm lambda);

/// Joint density per nm^2.
double eval_joint_density(const PairGaussian& source, WavelengthNm signal, WavelengthNm idler);

/// Spectral fringe period lambda^2 / (c * delay) in nm. Throws ConfigError for
/// a nonpositive delay.
double fringe_period(double delay_ps, WavelengthNm center);

FringeParams fringe_params(const DoublePulse& source);

/// Cumulative distribution of a 1D source on its sampling grid.
///
/// The grid step is 1 pm, refined to fwhm/50 for lines narrower than 50 pm so
/// that a line is never narrower than its tabulation. Draws invert the CDF
/// with linear interpolation inside the cell.
class WavelengthSampler {
 public:
  explicit WavelengthSampler(const SpectralSource& source);

  WavelengthNm operator()(RandomStream& rng) const;

  double support_min() const { return grid_.front(); }
  double support_max() const { return grid_.back(); }
  double step_nm() const { return step_; }

 private:
  std::vector<double> grid_;
  std::vector<double> cdf_;
  double step_ = 1e-3;
};

inline constexpr double kSamplingStepNm = 1e-3;

/// One draw from a 1D source. Builds a sampler on every call; prefer
/// WavelengthSampler for repeated draws. Throws ConfigError for a pair source.
WavelengthNm sample_wavelength(const SpectralSource& source, RandomStream& rng);

/// One (signal, idler) draw. Throws ConfigError when |correlation| >= 1.
std::pair<WavelengthNm, WavelengthNm> sample_pair(const PairGaussian& source, RandomStream& rng);

/// Two-column text table (wavelength_nm, density); optional header line;
/// whitespace, comma or semicolon separated; '#' starts a comment.
TabulatedSpectrum load_tabulated(const std::filesystem::path& path);

/// Short human-readable description used in manifests and summaries.
std::string describe(const SpectralSource& source);

}  // namespace tofspec::spectral
