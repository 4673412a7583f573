#include "tofspec/spectral_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tofspec/error.hpp"
#include "tofspec/numeric.hpp"
#include "tofspec/tables.hpp"

namespace tofspec::spectral {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kTailSigmas = 8.0;

double gaussian_density(const GaussianLine& g, double lambda) {
  const double sigma = fwhm_to_sigma(g.fwhm_nm);
  const double z = (lambda - g.center.value) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

void validate_line(const GaussianLine& g, const char* what) {
  if (!g.center.valid()) throw ConfigError(std::string(what) + ": center wavelength must be finite and positive");
  if (!(g.fwhm_nm > 0.0) || !std::isfinite(g.fwhm_nm))
    throw ConfigError(std::string(what) + ": fwhm must be finite and positive");
}

// Integral of envelope * (1 + V cos(k (x - c) + phi)) over the real line.
double double_pulse_norm(const DoublePulse& dp) {
  const double sigma = fwhm_to_sigma(dp.envelope.fwhm_nm);
  const double k = 2.0 * std::numbers::pi / fringe_period(dp.delay_ps, dp.envelope.center);
  return 1.0 + dp.visibility * std::exp(-0.5 * k * k * sigma * sigma) * std::cos(dp.phase_rad);
}

double double_pulse_density(const DoublePulse& dp, double lambda) {
  const double period = fringe_period(dp.delay_ps, dp.envelope.center);
  const double arg = 2.0 * std::numbers::pi * (lambda - dp.envelope.center.value) / period + dp.phase_rad;
  return gaussian_density(dp.envelope, lambda) * (1.0 + dp.visibility * std::cos(arg)) /
         double_pulse_norm(dp);
}

double line_step(double fwhm) { return std::min(kSamplingStepNm, fwhm / 50.0); }

}  // namespace

TabulatedSpectrum::TabulatedSpectrum(std::vector<double> grid_nm, std::vector<double> density)
    : grid_(std::move(grid_nm)), density_(std::move(density)) {
  if (grid_.size() != density_.size()) throw ConfigError("tabulated spectrum: grid/density length mismatch");
  if (grid_.size() < 2) throw ConfigError("tabulated spectrum: need at least two grid points");
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (!std::isfinite(grid_[i]) || grid_[i] <= 0.0)
      throw ConfigError("tabulated spectrum: wavelength at index " + std::to_string(i) + " is not positive");
    if (i > 0 && !(grid_[i] > grid_[i - 1]))
      throw ConfigError("tabulated spectrum: grid not strictly increasing at index " + std::to_string(i));
    if (!std::isfinite(density_[i]) || density_[i] < 0.0)
      throw ConfigError("tabulated spectrum: negative density at index " + std::to_string(i));
  }
  const double area = numeric::trapezoid(grid_, density_);
  if (!(area > 0.0)) throw ConfigError("tabulated spectrum: zero total density");
  for (auto& d : density_) d /= area;
}

double TabulatedSpectrum::operator()(double lambda_nm) const {
  return numeric::interp_linear(grid_, density_, lambda_nm);
}

void validate(const SpectralSource& source) {
  std::visit(Overloaded{
                 [](const GaussianLine& g) { validate_line(g, "gaussian line"); },
                 [](const DoublePulse& dp) {
                   validate_line(dp.envelope, "double pulse envelope");
                   if (!(dp.delay_ps > 0.0)) throw ConfigError("double pulse: delay T must be positive");
                   if (!(dp.visibility >= 0.0 && dp.visibility <= 1.0))
                     throw ConfigError("double pulse: visibility must lie in [0, 1]");
                   if (!std::isfinite(dp.phase_rad)) throw ConfigError("double pulse: phase must be finite");
                 },
                 [](const TabulatedSpectrum&) {},
                 [](const PairGaussian& pg) {
                   validate_line(pg.signal, "pair signal");
                   validate_line(pg.idler, "pair idler");
                   if (!(std::abs(pg.correlation) < 1.0))
                     throw ConfigError("pair source: |correlation| must be < 1");
                 },
             },
             source);
}

bool is_pair(const SpectralSource& source) { return std::holds_alternative<PairGaussian>(source); }

double eval_density(const SpectralSource& source, WavelengthNm lambda) {
  if (!std::isfinite(lambda.value)) return 0.0;
  return std::visit(Overloaded{
                        [&](const GaussianLine& g) { return gaussian_density(g, lambda.value); },
                        [&](const DoublePulse& dp) { return double_pulse_density(dp, lambda.value); },
                        [&](const TabulatedSpectrum& t) { return t(lambda.value); },
                        [&](const PairGaussian& pg) { return gaussian_density(pg.signal, lambda.value); },
                    },
                    source);
}

double eval_joint_density(const PairGaussian& source, WavelengthNm signal, WavelengthNm idler) {
  const double ss = fwhm_to_sigma(source.signal.fwhm_nm);
  const double si = fwhm_to_sigma(source.idler.fwhm_nm);
  const double rho = source.correlation;
  const double x = (signal.value - source.signal.center.value) / ss;
  const double y = (idler.value - source.idler.center.value) / si;
  const double one_m_r2 = 1.0 - rho * rho;
  const double q = (x * x - 2.0 * rho * x * y + y * y) / one_m_r2;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * ss * si * std::sqrt(one_m_r2));
}

double fringe_period(double delay_ps, WavelengthNm center) {
  if (!(delay_ps > 0.0) || !std::isfinite(delay_ps))
    throw ConfigError("fringe period: interferometer delay must be positive, got " + std::to_string(delay_ps) + " ps");
  return center.value * center.value / (kSpeedOfLightNmPerPs * delay_ps);
}

FringeParams fringe_params(const DoublePulse& source) {
  return FringeParams{fringe_period(source.delay_ps, source.envelope.center), source.visibility,
                      source.phase_rad, source.envelope.center, source.envelope.fwhm_nm};
}

WavelengthSampler::WavelengthSampler(const SpectralSource& source) {
  validate(source);
  double lo = 0.0;
  double hi = 0.0;
  std::visit(Overloaded{
                 [&](const GaussianLine& g) {
                   const double s = fwhm_to_sigma(g.fwhm_nm);
                   lo = g.center.value - kTailSigmas * s;
                   hi = g.center.value + kTailSigmas * s;
                   step_ = line_step(g.fwhm_nm);
                 },
                 [&](const DoublePulse& dp) {
                   const double s = fwhm_to_sigma(dp.envelope.fwhm_nm);
                   lo = dp.envelope.center.value - kTailSigmas * s;
                   hi = dp.envelope.center.value + kTailSigmas * s;
                   const double period = fringe_period(dp.delay_ps, dp.envelope.center);
                   step_ = std::min(line_step(dp.envelope.fwhm_nm), period / 50.0);
                 },
                 [&](const TabulatedSpectrum& t) {
                   lo = t.grid().front();
                   hi = t.grid().back();
                   step_ = kSamplingStepNm;
                 },
                 [&](const PairGaussian&) {
                   throw ConfigError("sample_wavelength: pair source is two-dimensional; use sample_pair");
                 },
             },
             source);

  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step_)) + 1;
  grid_.resize(n);
  cdf_.resize(n);
  for (std::size_t i = 0; i < n; ++i) grid_[i] = lo + static_cast<double>(i) * step_;
  double prev = eval_density(source, WavelengthNm(grid_[0]));
  cdf_[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double cur = eval_density(source, WavelengthNm(grid_[i]));
    cdf_[i] = cdf_[i - 1] + 0.5 * step_ * (prev + cur);
    prev = cur;
  }
  const double total = cdf_.back();
  if (!(total > 0.0)) throw ConfigError("sampler: source has no probability mass on its grid");
  for (auto& c : cdf_) c /= total;
}

WavelengthNm WavelengthSampler::operator()(RandomStream& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) return WavelengthNm(grid_.back());
  const std::size_t hi = static_cast<std::size_t>(it - cdf_.begin());
  const std::size_t lo = hi - 1;
  const double t = (u - cdf_[lo]) / (cdf_[hi] - cdf_[lo]);
  return WavelengthNm(grid_[lo] + t * (grid_[hi] - grid_[lo]));
}

WavelengthNm sample_wavelength(const SpectralSource& source, RandomStream& rng) {
  return WavelengthSampler(source)(rng);
}

std::pair<WavelengthNm, WavelengthNm> sample_pair(const PairGaussian& source, RandomStream& rng) {
  validate(source);
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  const double rho = source.correlation;
  const double s = source.signal.center.value + fwhm_to_sigma(source.signal.fwhm_nm) * z1;
  const double i = source.idler.center.value +
                   fwhm_to_sigma(source.idler.fwhm_nm) * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
  return {WavelengthNm(s), WavelengthNm(i)};
}

TabulatedSpectrum load_tabulated(const std::filesystem::path& path) {
  const auto table = tables::read_numeric_table(path, 2);
  std::vector<double> grid;
  std::vector<double> density;
  grid.reserve(table.rows.size());
  density.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    grid.push_back(row[0]);
    density.push_back(row[1]);
  }
  try {
    return TabulatedSpectrum(std::move(grid), std::move(density));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string describe(const SpectralSource& source) {
  std::ostringstream os;
  os.precision(10);
  std::visit(Overloaded{
                 [&](const GaussianLine& g) {
                   os << "gaussian(center=" << g.center.value << "nm, fwhm=" << g.fwhm_nm << "nm)";
                 },
                 [&](const DoublePulse& dp) {
                   os << "doublepulse(center=" << dp.envelope.center.value << "nm, fwhm=" << dp.envelope.fwhm_nm
                      << "nm, T=" << dp.delay_ps << "ps, V=" << dp.visibility << ", phase=" << dp.phase_rad << ")";
                 },
                 [&](const TabulatedSpectrum& t) {
                   os << "tabulated(" << t.grid().size() << " points, " << t.grid().front() << "-"
                      << t.grid().back() << "nm)";
                 },
                 [&](const PairGaussian& pg) {
                   os << "pair(signal=" << pg.signal.center.value << "nm/" << pg.signal.fwhm_nm
                      << "nm, idler=" << pg.idler.center.value << "nm/" << pg.idler.fwhm_nm
                      << "nm, rho=" << pg.correlation << ")";
                 },
             },
             source);
  return os.str();
}

}  // namespace tofspec::spectral
