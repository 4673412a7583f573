#include "tofspec/calibrate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

#include "tofspec/error.hpp"
#include "tofspec/numeric.hpp"

namespace tofspec::calibrate {

GddFit fit_gdd(std::span<const DelayPoint> points, int degree, WavelengthNm lambda0) {
  if (degree != 1 && degree != 2) throw ConfigError("fit_gdd: degree must be 1 or 2");
  const auto n_params = static_cast<std::size_t>(degree + 1);
  if (points.size() < n_params)
    throw CalibrationError("fit_gdd: need at least " + std::to_string(n_params) + " delay points, got " +
                           std::to_string(points.size()));
  std::set<double> distinct;
  for (const auto& p : points) {
    if (!std::isfinite(p.lambda_nm) || !std::isfinite(p.delay_ps))
      throw CalibrationError("fit_gdd: non-finite delay point");
    if (p.sigma_ps && !(*p.sigma_ps > 0.0)) throw CalibrationError("fit_gdd: delay uncertainty must be positive");
    distinct.insert(p.lambda_nm);
  }
  if (distinct.size() < n_params)
    throw CalibrationError("fit_gdd: rank-deficient design, only " + std::to_string(distinct.size()) +
                           " distinct wavelength(s)");

  const auto rows = static_cast<Eigen::Index>(points.size());
  const auto cols = static_cast<Eigen::Index>(n_params);
  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd rhs(rows);
  bool weighted = false;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    const double w = p.sigma_ps ? 1.0 / *p.sigma_ps : 1.0;
    weighted = weighted || p.sigma_ps.has_value();
    const double x = p.lambda_nm - lambda0.value;
    double xp = 1.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      design(i, j) = w * xp;
      xp *= x;
    }
    rhs[i] = w * p.delay_ps;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < cols) throw CalibrationError("fit_gdd: rank-deficient design matrix");
  const Eigen::VectorXd coef = qr.solve(rhs);

  GddFit fit;
  fit.degree = degree;
  fit.intercept_ps = coef[0];
  fit.gdd_ps_per_nm = coef[1];
  if (degree == 2) fit.quadratic_ps_per_nm2 = coef[2];

  double ss = 0.0;
  double wss = 0.0;
  for (const auto& p : points) {
    const double x = p.lambda_nm - lambda0.value;
    const double model = fit.intercept_ps + x * (fit.gdd_ps_per_nm + x * fit.quadratic_ps_per_nm2);
    const double r = p.delay_ps - model;
    ss += r * r;
    const double w = p.sigma_ps ? 1.0 / *p.sigma_ps : 1.0;
    wss += r * r * w * w;
  }
  fit.residual_rms_ps = std::sqrt(ss / static_cast<double>(points.size()));

  Eigen::MatrixXd cov = (design.transpose() * design).inverse();
  if (!weighted) {
    const auto dof = points.size() - n_params;
    cov *= dof > 0 ? wss / static_cast<double>(dof) : 0.0;
  }
  fit.sigma_gdd = std::sqrt(std::max(0.0, cov(1, 1)));
  if (degree == 2) fit.sigma_quadratic = std::sqrt(std::max(0.0, cov(2, 2)));
  return fit;
}

namespace {

std::size_t locate_argmax(const timetag::Histogram& hist) {
  if (hist.counts.empty() || hist.total() == 0) throw CalibrationError("find_offset: no calibration peak (empty histogram)");
  std::vector<std::uint64_t> sorted = hist.counts;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double median = static_cast<double>(*mid);
  const auto it = std::max_element(hist.counts.begin(), hist.counts.end());
  if (static_cast<double>(*it) <= 2.0 * median)
    throw CalibrationError("find_offset: no calibration peak (maximum " + std::to_string(*it) +
                           " is not above twice the median " + std::to_string(median) + ")");
  return static_cast<std::size_t>(it - hist.counts.begin());
}

struct WindowFit {
  double center = 0.0;  // relative to the centre of bin `anchor`
  double sigma = 0.0;
  bool from_fit = false;
};

// Gaussian fit, integrated over each bin, to the bins within
// +-kPeakHalfWindowBins of `anchor`; centroid of the same bins as fallback.
WindowFit fit_window(const timetag::Histogram& hist, std::size_t anchor) {
  const double bin = hist.bin_width_ps;
  const std::size_t first = anchor >= kPeakHalfWindowBins ? anchor - kPeakHalfWindowBins : 0;
  const std::size_t last = std::min(hist.counts.size() - 1, anchor + kPeakHalfWindowBins);
  numeric::LeastSquaresProblem pb;
  double n_total = 0.0;
  double first_moment = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    const double x = (static_cast<double>(i) - static_cast<double>(anchor)) * bin;
    const double y = static_cast<double>(hist.counts[i]);
    pb.x.push_back(x);
    pb.y.push_back(y);
    pb.sigma.push_back(std::sqrt(std::max(y, 1.0)));
    n_total += y;
    first_moment += x * y;
  }
  WindowFit out;
  if (n_total <= 0.0) return out;
  const double centroid = first_moment / n_total;
  double second_moment = 0.0;
  for (std::size_t k = 0; k < pb.x.size(); ++k) second_moment += pb.y[k] * (pb.x[k] - centroid) * (pb.x[k] - centroid);
  const double spread = std::sqrt(second_moment / n_total);
  out.center = centroid;
  out.sigma = spread / std::sqrt(n_total);

  pb.model = [bin](double x, std::span<const double> p) {
    const double s = std::abs(p[2]) + 1e-9;
    return p[0] * (numeric::normal_cdf((x + 0.5 * bin - p[1]) / s) - numeric::normal_cdf((x - 0.5 * bin - p[1]) / s));
  };
  if (pb.x.size() < 3) return out;
  const auto res = numeric::levenberg_marquardt(pb, {n_total, centroid, std::max(spread, 0.5 * bin)});
  const double half_span = (static_cast<double>(kPeakHalfWindowBins) + 0.5) * bin;
  if (res.converged && res.params[0] > 0.0 && std::isfinite(res.params[1]) && std::abs(res.params[1]) <= half_span &&
      std::isfinite(res.param_sigma(1))) {
    out.center = res.params[1];
    out.sigma = res.param_sigma(1);
    out.from_fit = true;
  }
  return out;
}

}  // namespace

OffsetFit find_offset(const timetag::Histogram& hist, WavelengthNm reference, double gdd_ps_per_nm,
                      WavelengthNm lambda0) {
  // The window starts at the argmax. On a peak much wider than the window
  // the argmax is noisy, so the window follows the fitted centre until it
  // stops moving.
  std::size_t anchor = locate_argmax(hist);
  WindowFit fit = fit_window(hist, anchor);
  std::set<std::size_t> visited{anchor};
  for (int round = 0; round < 16; ++round) {
    const double moved = std::round(fit.center / hist.bin_width_ps);
    if (moved == 0.0) break;
    const double next = static_cast<double>(anchor) + moved;
    if (next < 0.0 || next >= static_cast<double>(hist.counts.size())) break;
    // a centre on a bin boundary would otherwise bounce between two anchors
    if (!visited.insert(static_cast<std::size_t>(next)).second) break;
    anchor = static_cast<std::size_t>(next);
    fit = fit_window(hist, anchor);
  }
  OffsetFit out;
  out.used_centroid = !fit.from_fit;
  out.peak_time_ps = hist.bin_center(anchor) + fit.center;
  out.delta_tau_ps = out.peak_time_ps - gdd_ps_per_nm * (reference.value - lambda0.value);
  out.sigma_ps = fit.sigma;
  return out;
}

SpectrumTable counts_vs_wavelength(const timetag::Histogram& hist, const instrument::DispersionMap& map) {
  SpectrumTable t;
  t.lambda_nm.reserve(hist.counts.size());
  t.values.reserve(hist.counts.size());
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    t.lambda_nm.push_back(map.to_wavelength(hist.bin_center(i)).value);
    t.values.push_back(static_cast<double>(hist.counts[i]));
  }
  if (map.gdd_ps_per_nm < 0.0) {
    std::reverse(t.lambda_nm.begin(), t.lambda_nm.end());
    std::reverse(t.values.begin(), t.values.end());
  }
  return t;
}

instrument::EfficiencyCurve estimate_efficiency(const SpectrumTable& counts, const spectral::TabulatedSpectrum& reference,
                                                double total_h) {
  if (counts.lambda_nm.size() != counts.values.size())
    throw ConfigError("estimate_efficiency: counts table length mismatch");
  const auto& ref_grid = reference.grid();
  const double ref_peak = *std::max_element(reference.density().begin(), reference.density().end());
  bool overlap = false;
  std::vector<double> grid;
  std::vector<double> ratio;
  for (std::size_t i = 0; i < counts.lambda_nm.size(); ++i) {
    const double lambda = counts.lambda_nm[i];
    if (lambda < ref_grid.front() || lambda > ref_grid.back()) continue;
    overlap = true;
    const double in = reference(lambda);
    if (in < kReferenceMaskFraction * ref_peak) continue;
    grid.push_back(lambda);
    ratio.push_back(counts.values[i] / in);
  }
  if (!overlap) throw CalibrationError("estimate_efficiency: count and reference spectra have disjoint supports");
  if (grid.size() < 2) throw CalibrationError("estimate_efficiency: fewer than two unmasked points");
  try {
    return instrument::EfficiencyCurve(std::move(grid), std::move(ratio), total_h);
  } catch (const ConfigError& e) {
    throw CalibrationError(std::string("estimate_efficiency: ") + e.what());
  }
}

double CalibrationResult::resolution_nm() const {
  return map.gdd_ps_per_nm == 0.0 ? 0.0 : jitter_fwhm_ps / std::abs(map.gdd_ps_per_nm);
}

CalibrationResult calibrate(std::span<const DelayPoint> delays, int degree, WavelengthNm lambda0,
                            const timetag::Histogram& narrowband, WavelengthNm narrowband_center,
                            const timetag::Histogram& broadband, const spectral::TabulatedSpectrum& reference,
                            double total_h) {
  const GddFit gdd = fit_gdd(delays, degree, lambda0);
  const OffsetFit offset = find_offset(narrowband, narrowband_center, gdd.gdd_ps_per_nm, lambda0);
  CalibrationResult out;
  out.map = {gdd.gdd_ps_per_nm, lambda0, offset.delta_tau_ps};
  out.intercept_ps = gdd.intercept_ps;
  out.quadratic_ps_per_nm2 = gdd.quadratic_ps_per_nm2;
  out.fit_degree = degree;
  out.fit_residual_rms_ps = gdd.residual_rms_ps;
  out.sigma_gdd = gdd.sigma_gdd;
  out.sigma_delta_tau = offset.sigma_ps;
  out.histogram_bin_ps = narrowband.bin_width_ps;
  out.efficiency = estimate_efficiency(counts_vs_wavelength(broadband, out.map), reference, total_h);
  return out;
}

}  // namespace tofspec::calibrate
