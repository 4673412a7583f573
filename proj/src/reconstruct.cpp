#include "tofspec/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tofspec/error.hpp"
#include "tofspec/numeric.hpp"
#include "tofspec/units.hpp"

namespace tofspec::reconstruct {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct AxisMask {
  std::vector<double> eta;
  std::vector<bool> masked;
};

AxisMask mask_axis(const std::vector<double>& lambda, const instrument::EfficiencyCurve& eff) {
  AxisMask m;
  const double threshold = kEfficiencyMaskFraction * eff.peak();
  for (double l : lambda) {
    const double e = eff(l);
    m.eta.push_back(e);
    m.masked.push_back(!(e > 0.0) || e < threshold);
  }
  return m;
}

bool any_in_range(const std::vector<double>& lambda, const instrument::EfficiencyCurve& eff) {
  return std::any_of(lambda.begin(), lambda.end(),
                     [&](double l) { return l >= eff.grid().front() && l <= eff.grid().back(); });
}

double bin_gaussian(double u, double width, double area, double mu, double sigma) {
  const double s = std::abs(sigma) + 1e-12;
  return area * (numeric::normal_cdf((u + 0.5 * width - mu) / s) - numeric::normal_cdf((u - 0.5 * width - mu) / s));
}

// Unmasked bins in local coordinates around `origin`.
struct FitData {
  double origin = 0.0;
  std::vector<double> u;
  std::vector<double> y;
  std::vector<double> corr;
};

FitData collect(const ReconstructedSpectrum& spec) {
  FitData d;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec.masked[i]) continue;
    d.u.push_back(spec.lambda_nm[i]);
    d.y.push_back(spec.corrected[i]);
    d.corr.push_back(spec.correction[i] > 0.0 ? spec.correction[i] : 1.0);
  }
  return d;
}

// Variance of a corrected bin is corr * E[corrected]; floor keeps empty
// tails from dominating.
std::vector<double> pearson_sigma(const FitData& d, const std::vector<double>& expected) {
  std::vector<double> s(d.y.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(std::max(expected[i], 0.5 * d.corr[i]) * d.corr[i]);
  return s;
}

double pearson_chi2(const FitData& d, const std::vector<double>& expected, std::size_t n_params) {
  double chi2 = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double var = std::max(expected[i], 0.5 * d.corr[i]) * d.corr[i];
    chi2 += (d.y[i] - expected[i]) * (d.y[i] - expected[i]) / var;
  }
  return d.y.size() > n_params ? chi2 / static_cast<double>(d.y.size() - n_params) : 0.0;
}

std::vector<double> evaluate(const numeric::LeastSquaresProblem& pb, std::span<const double> p) {
  std::vector<double> m(pb.x.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = pb.model(pb.x[i], p);
  return m;
}

// Two passes: data-based weights to find the neighbourhood, then
// model-based weights, which do not bias low-count bins downward.
numeric::LeastSquaresResult two_pass_fit(numeric::LeastSquaresProblem& pb, const FitData& d, std::vector<double> init,
                                         const char* what) {
  pb.sigma = pearson_sigma(d, d.y);
  auto first = numeric::levenberg_marquardt(pb, std::move(init));
  if (!first.converged) throw FitError(std::string(what) + ": fit did not converge", first.params);
  pb.sigma = pearson_sigma(d, evaluate(pb, first.params));
  auto second = numeric::levenberg_marquardt(pb, first.params);
  if (!second.converged) throw FitError(std::string(what) + ": fit did not converge", second.params);
  return second;
}

}  // namespace

std::size_t ReconstructedSpectrum::unmasked_count() const {
  return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), false));
}

double ReconstructedSpectrum::unmasked_raw_total() const {
  double s = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (!masked[i]) s += static_cast<double>(raw[i]);
  return s;
}

double ReconstructedSpectrum::unmasked_corrected_total() const {
  double s = 0.0;
  for (std::size_t i = 0; i < corrected.size(); ++i)
    if (!masked[i]) s += corrected[i];
  return s;
}

ReconstructedSpectrum reconstruct_spectrum(const timetag::Histogram& hist, const calibrate::CalibrationResult& calib) {
  if (calib.efficiency.empty()) throw ConfigError("reconstruct: calibration has no efficiency curve");
  const std::size_t n = hist.counts.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (calib.map.gdd_ps_per_nm < 0.0) std::reverse(order.begin(), order.end());

  ReconstructedSpectrum out;
  out.bin_width_nm = hist.bin_width_ps / std::abs(calib.map.gdd_ps_per_nm);
  out.resolution_fwhm_nm = calib.resolution_nm();
  for (std::size_t k : order) {
    out.lambda_nm.push_back(calib.map.to_wavelength(hist.bin_center(k)).value);
    out.raw.push_back(hist.counts[k]);
  }
  if (!any_in_range(out.lambda_nm, calib.efficiency))
    throw AnalysisError("reconstruct: histogram wavelength range does not overlap the calibration");

  const AxisMask mask = mask_axis(out.lambda_nm, calib.efficiency);
  out.masked = mask.masked;
  double raw_total = 0.0;
  double divided_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.masked[i]) continue;
    raw_total += static_cast<double>(out.raw[i]);
    divided_total += static_cast<double>(out.raw[i]) / mask.eta[i];
  }
  const double scale = divided_total > 0.0 ? raw_total / divided_total : calib.efficiency.peak();
  out.corrected.assign(n, 0.0);
  out.stat_sigma.assign(n, 0.0);
  out.correction.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.masked[i]) continue;
    const double c = scale / mask.eta[i];
    const double r = static_cast<double>(out.raw[i]);
    out.correction[i] = c;
    out.corrected[i] = r * c;
    out.stat_sigma[i] = std::sqrt(r) * c;
  }
  return out;
}

double JsiGrid::unmasked_raw_total() const {
  double s = 0.0;
  for (std::size_t i = 0; i < signal_nm.size(); ++i)
    for (std::size_t j = 0; j < idler_nm.size(); ++j)
      if (!cell_masked(i, j)) s += static_cast<double>(raw[index(i, j)]);
  return s;
}

double JsiGrid::unmasked_corrected_total() const {
  double s = 0.0;
  for (std::size_t i = 0; i < signal_nm.size(); ++i)
    for (std::size_t j = 0; j < idler_nm.size(); ++j)
      if (!cell_masked(i, j)) s += corrected[index(i, j)];
  return s;
}

namespace {

struct TimeAxis {
  double origin = 0.0;
  std::size_t bins = 0;
};

// Covers the calibrated wavelength range. Bin centres sit on multiples of the
// bin width so that delays quantized to that width land mid-bin.
TimeAxis time_axis(const calibrate::CalibrationResult& calib, double width) {
  if (!(width > 0.0)) throw ConfigError("reconstruct_jsi: bin width must be positive");
  const double t0 = calib.map.to_time(WavelengthNm(calib.efficiency.grid().front()));
  const double t1 = calib.map.to_time(WavelengthNm(calib.efficiency.grid().back()));
  const double lo = std::min(t0, t1);
  const double hi = std::max(t0, t1);
  TimeAxis a;
  a.origin = (std::floor(lo / width) - 0.5) * width;
  a.bins = static_cast<std::size_t>(std::ceil((hi - a.origin) / width));
  return a;
}

}  // namespace

JsiGrid reconstruct_jsi(std::span<const timetag::CoincidencePair> pairs, const calibrate::CalibrationResult& calib_a,
                        const calibrate::CalibrationResult& calib_b, double bin_width_a_ps, double bin_width_b_ps,
                        std::size_t n_chunks) {
  if (calib_a.efficiency.empty() || calib_b.efficiency.empty())
    throw ConfigError("reconstruct_jsi: calibration has no efficiency curve");
  const TimeAxis ta = time_axis(calib_a, bin_width_a_ps);
  const TimeAxis tb = time_axis(calib_b, bin_width_b_ps);
  const timetag::JointHistogramSpec spec{bin_width_a_ps, bin_width_b_ps, ta.origin, tb.origin, ta.bins, tb.bins};
  const timetag::JointHistogram joint =
      timetag::build_joint_histogram_chunked(pairs, spec, std::max<std::size_t>(1, n_chunks));

  std::vector<std::size_t> order_a(ta.bins);
  std::vector<std::size_t> order_b(tb.bins);
  std::iota(order_a.begin(), order_a.end(), std::size_t{0});
  std::iota(order_b.begin(), order_b.end(), std::size_t{0});
  if (calib_a.map.gdd_ps_per_nm < 0.0) std::reverse(order_a.begin(), order_a.end());
  if (calib_b.map.gdd_ps_per_nm < 0.0) std::reverse(order_b.begin(), order_b.end());

  JsiGrid g;
  g.signal_bin_nm = bin_width_a_ps / std::abs(calib_a.map.gdd_ps_per_nm);
  g.idler_bin_nm = bin_width_b_ps / std::abs(calib_b.map.gdd_ps_per_nm);
  g.signal_resolution_nm = calib_a.resolution_nm();
  g.idler_resolution_nm = calib_b.resolution_nm();
  g.dropped = joint.dropped;
  for (std::size_t k : order_a)
    g.signal_nm.push_back(calib_a.map.to_wavelength(ta.origin + (static_cast<double>(k) + 0.5) * bin_width_a_ps).value);
  for (std::size_t k : order_b)
    g.idler_nm.push_back(calib_b.map.to_wavelength(tb.origin + (static_cast<double>(k) + 0.5) * bin_width_b_ps).value);
  if (!any_in_range(g.signal_nm, calib_a.efficiency) || !any_in_range(g.idler_nm, calib_b.efficiency))
    throw AnalysisError("reconstruct_jsi: time grid does not overlap the calibration");

  const AxisMask ma = mask_axis(g.signal_nm, calib_a.efficiency);
  const AxisMask mb = mask_axis(g.idler_nm, calib_b.efficiency);
  g.signal_masked = ma.masked;
  g.idler_masked = mb.masked;
  const std::size_t na = g.signal_nm.size();
  const std::size_t nb = g.idler_nm.size();
  g.raw.assign(na * nb, 0);
  double raw_total = 0.0;
  double divided_total = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const std::uint64_t r = joint.at(order_a[i], order_b[j]);
      g.raw[g.index(i, j)] = r;
      if (g.cell_masked(i, j)) continue;
      raw_total += static_cast<double>(r);
      divided_total += static_cast<double>(r) / (ma.eta[i] * mb.eta[j]);
    }
  }
  const double scale =
      divided_total > 0.0 ? raw_total / divided_total : calib_a.efficiency.peak() * calib_b.efficiency.peak();
  g.corrected.assign(na * nb, 0.0);
  g.correction.assign(na * nb, 0.0);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (g.cell_masked(i, j)) continue;
      const double c = scale / (ma.eta[i] * mb.eta[j]);
      g.correction[g.index(i, j)] = c;
      g.corrected[g.index(i, j)] = static_cast<double>(g.raw[g.index(i, j)]) * c;
    }
  }
  return g;
}

ReconstructedSpectrum marginal(const JsiGrid& jsi, Axis axis) {
  const bool sig = axis == Axis::kSignal;
  const std::size_t n = sig ? jsi.signal_nm.size() : jsi.idler_nm.size();
  const std::size_t m = sig ? jsi.idler_nm.size() : jsi.signal_nm.size();
  ReconstructedSpectrum out;
  out.lambda_nm = sig ? jsi.signal_nm : jsi.idler_nm;
  out.masked = sig ? jsi.signal_masked : jsi.idler_masked;
  out.bin_width_nm = sig ? jsi.signal_bin_nm : jsi.idler_bin_nm;
  out.resolution_fwhm_nm = sig ? jsi.signal_resolution_nm : jsi.idler_resolution_nm;
  out.raw.assign(n, 0);
  out.corrected.assign(n, 0.0);
  out.stat_sigma.assign(n, 0.0);
  out.correction.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t raw = 0;
    double corrected = 0.0;
    double variance = 0.0;
    double corr_sum = 0.0;
    std::size_t cells = 0;
    for (std::size_t l = 0; l < m; ++l) {
      const std::size_t i = sig ? k : l;
      const std::size_t j = sig ? l : k;
      if (jsi.cell_masked(i, j)) continue;
      const std::size_t idx = jsi.index(i, j);
      raw += jsi.raw[idx];
      corrected += jsi.corrected[idx];
      variance += static_cast<double>(jsi.raw[idx]) * jsi.correction[idx] * jsi.correction[idx];
      corr_sum += jsi.correction[idx];
      ++cells;
    }
    if (cells == 0) {
      out.masked[k] = true;
      continue;
    }
    out.raw[k] = raw;
    out.corrected[k] = corrected;
    out.stat_sigma[k] = std::sqrt(variance);
    out.correction[k] = raw > 0 ? corrected / static_cast<double>(raw) : corr_sum / static_cast<double>(cells);
  }
  return out;
}

double grid_correlation(const JsiGrid& jsi) {
  double w = 0.0;
  double ms = 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < jsi.signal_nm.size(); ++i)
    for (std::size_t j = 0; j < jsi.idler_nm.size(); ++j) {
      if (jsi.cell_masked(i, j)) continue;
      const double c = jsi.corrected[jsi.index(i, j)];
      w += c;
      ms += c * jsi.signal_nm[i];
      mi += c * jsi.idler_nm[j];
    }
  if (!(w > 0.0)) throw AnalysisError("grid_correlation: grid is empty");
  ms /= w;
  mi /= w;
  double vs = 0.0;
  double vi = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < jsi.signal_nm.size(); ++i)
    for (std::size_t j = 0; j < jsi.idler_nm.size(); ++j) {
      if (jsi.cell_masked(i, j)) continue;
      const double c = jsi.corrected[jsi.index(i, j)];
      const double ds = jsi.signal_nm[i] - ms;
      const double di = jsi.idler_nm[j] - mi;
      vs += c * ds * ds;
      vi += c * di * di;
      cov += c * ds * di;
    }
  if (!(vs > 0.0 && vi > 0.0)) throw AnalysisError("grid_correlation: degenerate marginal");
  return cov / std::sqrt(vs * vi);
}

namespace {

struct Moments {
  double total = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(const FitData& d) {
  Moments m;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double y = std::max(d.y[i], 0.0);
    m.total += y;
    m.mean += y * d.u[i];
  }
  if (!(m.total > 0.0)) throw AnalysisError("spectrum has no counts in unmasked bins");
  m.mean /= m.total;
  for (std::size_t i = 0; i < d.y.size(); ++i) m.sd += std::max(d.y[i], 0.0) * (d.u[i] - m.mean) * (d.u[i] - m.mean);
  m.sd = std::sqrt(m.sd / m.total);
  return m;
}

FitData local_data(const ReconstructedSpectrum& spec, const char* what) {
  FitData d = collect(spec);
  if (d.y.size() < 4) throw AnalysisError(std::string(what) + ": fewer than 4 unmasked bins");
  const auto peak = std::max_element(d.y.begin(), d.y.end());
  d.origin = d.u[static_cast<std::size_t>(peak - d.y.begin())];
  for (auto& u : d.u) u -= d.origin;
  return d;
}

}  // namespace

GaussianFit fit_gaussian(const ReconstructedSpectrum& spec) {
  FitData d = local_data(spec, "fit_gaussian");
  const Moments mo = moments(d);
  const double w = spec.bin_width_nm;
  numeric::LeastSquaresProblem pb;
  pb.x = d.u;
  pb.y = d.y;
  pb.model = [w](double u, std::span<const double> p) { return bin_gaussian(u, w, p[0], p[1], p[2]); };
  const auto res = two_pass_fit(pb, d, {mo.total, mo.mean, std::max(mo.sd, 0.5 * w)}, "fit_gaussian");

  GaussianFit fit;
  fit.area = res.params[0];
  fit.center_nm = d.origin + res.params[1];
  fit.fwhm_nm = kFwhmPerSigma * std::abs(res.params[2]);
  fit.sigma_center_nm = res.param_sigma(1);
  fit.sigma_fwhm_nm = kFwhmPerSigma * res.param_sigma(2);
  fit.reduced_chi2 = pearson_chi2(d, evaluate(pb, res.params), 3);
  fit.bins_used = d.y.size();
  return fit;
}

FringeFit fit_fringes(const ReconstructedSpectrum& spec, const FringeFitOptions& options) {
  const GaussianFit env = fit_gaussian(spec);
  FitData d = local_data(spec, "fit_fringes");
  // Phase is referred to the envelope centre, not to the brightest bin.
  const double shift = env.center_nm - d.origin;
  for (auto& u : d.u) u -= shift;
  d.origin = env.center_nm;

  const double w = spec.bin_width_nm;
  const double span = d.u.back() - d.u.front();
  if (options.fixed_period_nm && !(*options.fixed_period_nm > 0.0))
    throw ConfigError("fit_fringes: fixed period must be positive");

  const double env_area = env.area;
  const double env_sigma = env.fwhm_nm / kFwhmPerSigma;
  std::vector<double> envelope(d.u.size());
  std::vector<double> resid(d.u.size());
  for (std::size_t i = 0; i < d.u.size(); ++i) {
    envelope[i] = bin_gaussian(d.u[i], w, env_area, 0.0, env_sigma);
    resid[i] = d.y[i] - envelope[i];
  }

  double period = 0.0;
  if (options.fixed_period_nm) {
    period = *options.fixed_period_nm;
  } else {
    // Periodogram of the envelope residual between 4 bins per period and
    // two periods per span.
    const double f_lo = 2.0 / span;
    const double f_hi = 1.0 / (4.0 * w);
    if (!(f_hi > f_lo)) throw AnalysisError("fit_fringes: spectrum too short to search for a fringe period");
    constexpr int kSteps = 4000;
    double best = -1.0;
    for (int s = 0; s <= kSteps; ++s) {
      const double f = f_lo + (f_hi - f_lo) * s / kSteps;
      double re = 0.0;
      double im = 0.0;
      for (std::size_t i = 0; i < d.u.size(); ++i) {
        re += resid[i] * std::cos(kTwoPi * f * d.u[i]);
        im += resid[i] * std::sin(kTwoPi * f * d.u[i]);
      }
      const double power = re * re + im * im;
      if (power > best) {
        best = power;
        period = 1.0 / f;
      }
    }
  }
  if (period < 4.0 * w) {
    std::ostringstream msg;
    msg << "fit_fringes: period " << period << " nm is sampled by fewer than 4 bins of " << w << " nm";
    throw AnalysisError(msg.str());
  }

  const double res_fwhm = options.resolution_fwhm_nm.value_or(spec.resolution_fwhm_nm);
  const double sigma_r = res_fwhm / kFwhmPerSigma;
  auto contrast = [&](double p) {
    if (!options.correct_contrast) return 1.0;
    const double x = std::numbers::pi * w / p;
    const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
    return std::exp(-2.0 * std::numbers::pi * std::numbers::pi * sigma_r * sigma_r / (p * p)) * sinc;
  };

  // Linear start for the quadrature amplitudes at the chosen period.
  double s_cc = 0.0, s_ss = 0.0, s_cs = 0.0, r_c = 0.0, r_s = 0.0;
  const double c0 = contrast(period);
  for (std::size_t i = 0; i < d.u.size(); ++i) {
    const double cc = envelope[i] * c0 * std::cos(kTwoPi * d.u[i] / period);
    const double ss = -envelope[i] * c0 * std::sin(kTwoPi * d.u[i] / period);
    s_cc += cc * cc;
    s_ss += ss * ss;
    s_cs += cc * ss;
    r_c += cc * resid[i];
    r_s += ss * resid[i];
  }
  const double det = s_cc * s_ss - s_cs * s_cs;
  const double a0 = det > 0.0 ? (r_c * s_ss - r_s * s_cs) / det : 0.0;
  const double b0 = det > 0.0 ? (r_s * s_cc - r_c * s_cs) / det : 0.0;

  const bool fixed = options.fixed_period_nm.has_value();
  numeric::LeastSquaresProblem pb;
  pb.x = d.u;
  pb.y = d.y;
  pb.model = [&, fixed, period](double u, std::span<const double> p) {
    const double per = fixed ? period : p[5];
    const double k = kTwoPi / per;
    return bin_gaussian(u, w, p[0], p[1], p[2]) * (1.0 + contrast(per) * (p[3] * std::cos(k * u) - p[4] * std::sin(k * u)));
  };
  std::vector<double> init{env_area, 0.0, env_sigma, a0, b0};
  if (!fixed) init.push_back(period);

  FringeFit fit;
  fit.phase_reference_nm = d.origin;
  fit.period_fixed = fixed;
  const auto res = two_pass_fit(pb, d, init, "fit_fringes");
  const auto& p = res.params;
  fit.period_nm = fixed ? period : p[5];
  fit.amplitude = p[0];
  fit.envelope = {WavelengthNm(d.origin + p[1]), kFwhmPerSigma * std::abs(p[2])};
  fit.contrast_factor = contrast(fit.period_nm);
  fit.visibility = std::min(1.0, std::hypot(p[3], p[4]));
  fit.phase_rad = std::atan2(p[4], p[3]);
  fit.reduced_chi2 = pearson_chi2(d, evaluate(pb, p), p.size());
  fit.valid = true;
  return fit;
}

double measure_fwhm(const ReconstructedSpectrum& spec) {
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec.masked[i]) continue;
    x.push_back(spec.lambda_nm[i]);
    y.push_back(spec.corrected[i]);
  }
  if (x.size() < 3) throw AnalysisError("measure_fwhm: fewer than 3 unmasked bins");
  const double half = 0.5 * *std::max_element(y.begin(), y.end());
  if (!(half > 0.0)) throw AnalysisError("measure_fwhm: spectrum is empty");
  if (y.front() >= half || y.back() >= half)
    throw AnalysisError("measure_fwhm: spectrum does not fall below half maximum inside the unmasked range");
  std::vector<double> rising;
  std::vector<double> falling;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const bool below0 = y[i] < half;
    const bool below1 = y[i + 1] < half;
    if (below0 == below1) continue;
    const double t = (half - y[i]) / (y[i + 1] - y[i]);
    (below0 ? rising : falling).push_back(x[i] + t * (x[i + 1] - x[i]));
  }
  if (rising.size() != 1 || falling.size() != 1) {
    std::ostringstream msg;
    msg << "measure_fwhm: multimodal at half maximum; crossings at";
    std::vector<double> all = rising;
    all.insert(all.end(), falling.begin(), falling.end());
    std::sort(all.begin(), all.end());
    for (double c : all) msg << ' ' << c;
    msg << " nm";
    throw AnalysisError(msg.str());
  }
  return falling.front() - rising.front();
}

}  // namespace tofspec::reconstruct
