#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tofspec/calibrate.hpp"
#include "tofspec/spectral_model.hpp"
#include "tofspec/timetag.hpp"

namespace tofspec::reconstruct {

/// Bins whose efficiency is below this fraction of the curve's peak are masked.
inline constexpr double kEfficiencyMaskFraction = 0.05;

/// Efficiency-corrected spectrum on the wavelength images of the time bins.
/// All vectors share one index; wavelengths ascend.
struct ReconstructedSpectrum {
  std::vector<double> lambda_nm;
  std::vector<double> corrected;
  std::vector<std::uint64_t> raw;
  std::vector<double> stat_sigma;
  std::vector<double> correction;  // corrected = raw * correction; 0 where masked
  std::vector<bool> masked;
  double bin_width_nm = 0.0;
  double resolution_fwhm_nm = 0.0;  // 0 when the calibration carries no jitter

  std::size_t size() const { return lambda_nm.size(); }
  std::size_t unmasked_count() const;
  double unmasked_raw_total() const;
  double unmasked_corrected_total() const;
};

/// S(lambda) = N(tau(lambda)) / eta(lambda), globally rescaled so the unmasked
/// corrected total equals the unmasked raw total. Throws AnalysisError when
/// no time bin maps into the calibrated wavelength range.
ReconstructedSpectrum reconstruct_spectrum(const timetag::Histogram& hist, const calibrate::CalibrationResult& calib);

/// Coincidence counts on a (signal, idler) wavelength grid. Index [i][j] is
/// signal bin i, idler bin j, stored row-major.
struct JsiGrid {
  std::vector<double> signal_nm;
  std::vector<double> idler_nm;
  std::vector<double> corrected;
  std::vector<std::uint64_t> raw;
  std::vector<double> correction;
  std::vector<bool> signal_masked;
  std::vector<bool> idler_masked;
  double signal_bin_nm = 0.0;
  double idler_bin_nm = 0.0;
  double signal_resolution_nm = 0.0;
  double idler_resolution_nm = 0.0;
  std::uint64_t dropped = 0;  // pairs outside the time grid

  std::size_t index(std::size_t i, std::size_t j) const { return i * idler_nm.size() + j; }
  bool cell_masked(std::size_t i, std::size_t j) const { return signal_masked[i] || idler_masked[j]; }
  double unmasked_raw_total() const;
  double unmasked_corrected_total() const;
};

/// Grids each pair by its two delays over the calibrated windows, corrects by
/// eta_a * eta_b and conserves the unmasked total. Gridding runs over
/// `n_chunks` slices of the pair list.
JsiGrid reconstruct_jsi(std::span<const timetag::CoincidencePair> pairs, const calibrate::CalibrationResult& calib_a,
                        const calibrate::CalibrationResult& calib_b, double bin_width_a_ps, double bin_width_b_ps,
                        std::size_t n_chunks = 1);

enum class Axis { kSignal, kIdler };

/// Sum over the other axis, restricted to unmasked cells.
ReconstructedSpectrum marginal(const JsiGrid& jsi, Axis axis);

/// Sample Pearson correlation of (lambda_s, lambda_i) under the corrected
/// unmasked grid.
double grid_correlation(const JsiGrid& jsi);

/// Gaussian line fitted to the unmasked bins, integrated over each bin.
struct GaussianFit {
  double center_nm = 0.0;
  double fwhm_nm = 0.0;
  double area = 0.0;
  double sigma_center_nm = 0.0;
  double sigma_fwhm_nm = 0.0;
  double reduced_chi2 = 0.0;  // Pearson, against the fitted model
  std::size_t bins_used = 0;
};

/// Throws FitError on non-convergence, AnalysisError with fewer than 4 bins.
GaussianFit fit_gaussian(const ReconstructedSpectrum& spec);

struct FringeFit {
  double period_nm = 0.0;
  double visibility = 0.0;  // of the source, after undoing the instrument contrast loss
  double phase_rad = 0.0;   // phase of cos(2 pi (lambda - phase_reference) / period + phase)
  double phase_reference_nm = 0.0;
  spectral::GaussianLine envelope;  // as measured, including the instrument broadening
  double amplitude = 0.0;
  double contrast_factor = 1.0;  // observed / source fringe contrast
  double reduced_chi2 = 0.0;
  bool period_fixed = false;
  bool valid = false;
};

struct FringeFitOptions {
  std::optional<double> fixed_period_nm;
  /// Undo contrast lost to the instrument resolution and to bin averaging.
  bool correct_contrast = true;
  /// Overrides the spectrum's resolution for the contrast correction.
  std::optional<double> resolution_fwhm_nm;
};

/// Fits Gaussian envelope x (1 + V cos(2 pi (lambda - lambda_ref) / P + phi)).
/// A free period starts from the strongest periodogram peak of the
/// envelope-normalized residual. Needs at least 4 bins per period.
/// Throws FitError (params flagged invalid) on non-convergence.
FringeFit fit_fringes(const ReconstructedSpectrum& spec, const FringeFitOptions& options = {});

/// Width between the linearly interpolated half-maximum crossings of the
/// corrected unmasked spectrum. Throws AnalysisError listing the crossings
/// when more than one region lies above half maximum.
double measure_fwhm(const ReconstructedSpectrum& spec);

}  // namespace tofspec::reconstruct
