#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tofspec/instrument.hpp"
#include "tofspec/spectral_model.hpp"
#include "tofspec/timetag.hpp"

namespace tofspec::calibrate {

/// Measured group delay at one filter setting.
struct DelayPoint {
  double lambda_nm = 0.0;
  double delay_ps = 0.0;
  std::optional<double> sigma_ps;  // unweighted when absent
};

struct GddFit {
  int degree = 1;
  double gdd_ps_per_nm = 0.0;        // linear coefficient in (lambda - lambda0)
  double intercept_ps = 0.0;         // delay at lambda0
  double quadratic_ps_per_nm2 = 0.0; // degree 2 only
  double residual_rms_ps = 0.0;
  double sigma_gdd = 0.0;
  double sigma_quadratic = 0.0;
};

/// Weighted least-squares polynomial of delay in (lambda - lambda0).
///
/// Degree 1 is the calibration; degree 2 is a diagnostic that reports the
/// quadratic term. Needs at least degree+1 points at distinct wavelengths.
/// Without per-point sigmas the parameter errors are scaled by the residual
/// variance (zero for an exactly determined system).
GddFit fit_gdd(std::span<const DelayPoint> points, int degree, WavelengthNm lambda0);

struct OffsetFit {
  double delta_tau_ps = 0.0;
  double sigma_ps = 0.0;
  double peak_time_ps = 0.0;
  bool used_centroid = false;  // Gaussian fit failed, centroid used instead
};

/// Locates the narrowband calibration peak and converts it to the time
/// offset delta_tau = peak - D (lambda_ref - lambda0).
///
/// The peak is the centre of a least-squares Gaussian fitted to the bins
/// within +-3 of the argmax; if that fit fails, the count-weighted centroid
/// of the same bins is used. When the result lies a bin or more from the
/// window centre, the window is moved there and refitted. Throws
/// CalibrationError when the histogram is empty or has no peak above twice
/// its median.
OffsetFit find_offset(const timetag::Histogram& hist, WavelengthNm reference, double gdd_ps_per_nm,
                      WavelengthNm lambda0);

inline constexpr int kPeakHalfWindowBins = 3;

/// Counts per time bin relabelled by the wavelength of the bin centre.
struct SpectrumTable {
  std::vector<double> lambda_nm;  // ascending
  std::vector<double> values;
};

SpectrumTable counts_vs_wavelength(const timetag::Histogram& hist, const instrument::DispersionMap& map);

/// Fraction of the reference peak below which reference bins are masked.
inline constexpr double kReferenceMaskFraction = 0.01;

/// eta(lambda) = N_S(lambda) / (A I_in(lambda)) on the counts grid, with A
/// chosen so that eta integrates to total_h. Points where I_in is below 1%
/// of its peak are excluded from both the curve and the normalization.
instrument::EfficiencyCurve estimate_efficiency(const SpectrumTable& counts, const spectral::TabulatedSpectrum& reference,
                                                double total_h);

/// Everything needed to invert the frequency-to-time map and undo eta.
struct CalibrationResult {
  instrument::DispersionMap map;
  double intercept_ps = 0.0;  // delay-scan intercept at lambda0 (oscilloscope path)
  double quadratic_ps_per_nm2 = 0.0;
  int fit_degree = 1;
  instrument::EfficiencyCurve efficiency;
  double fit_residual_rms_ps = 0.0;
  double sigma_gdd = 0.0;
  double sigma_delta_tau = 0.0;
  double jitter_fwhm_ps = 0.0;     // temporal point-spread width, 0 if unknown
  double histogram_bin_ps = 0.0;   // bin width used during calibration, 0 if unknown

  double resolution_nm() const;
};

/// Runs the three calibration steps in sequence.
CalibrationResult calibrate(std::span<const DelayPoint> delays, int degree, WavelengthNm lambda0,
                            const timetag::Histogram& narrowband, WavelengthNm narrowband_center,
                            const timetag::Histogram& broadband, const spectral::TabulatedSpectrum& reference,
                            double total_h);

// Calibration files: "key = value" lines, then an [efficiency] section with
// one "lambda_nm eta" pair per line. Unknown keys are rejected.
inline constexpr int kCalibrationFormatVersion = 1;

void write_calibration(std::ostream& out, const CalibrationResult& calib);
void write_calibration(const std::filesystem::path& path, const CalibrationResult& calib);
CalibrationResult read_calibration(std::istream& in, const std::string& source_name = "<stream>");
CalibrationResult read_calibration(const std::filesystem::path& path);

/// Delay-scan CSV: lambda_nm, delay_ps[, sigma_ps].
std::vector<DelayPoint> read_delay_points(const std::filesystem::path& path);
void write_delay_points(const std::filesystem::path& path, std::span<const DelayPoint> points);

}  // namespace tofspec::calibrate
