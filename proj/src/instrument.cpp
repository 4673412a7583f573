#include "tofspec/instrument.hpp"

#include <algorithm>
#include <cmath>

#include "tofspec/error.hpp"
#include "tofspec/numeric.hpp"

namespace tofspec::instrument {

WavelengthNm DispersionMap::to_wavelength(double tau_ps) const {
  if (gdd_ps_per_nm == 0.0) throw ConfigError("dispersion map: GDD is zero, the mapping is degenerate");
  return WavelengthNm(lambda0.value + (tau_ps - delta_tau_ps) / gdd_ps_per_nm);
}

EfficiencyCurve::EfficiencyCurve(std::vector<double> grid_nm, std::vector<double> shape, double total_h)
    : grid_(std::move(grid_nm)), eta_(std::move(shape)), total_h_(total_h) {
  if (grid_.size() != eta_.size()) throw ConfigError("efficiency curve: grid/eta length mismatch");
  if (grid_.size() < 2) throw ConfigError("efficiency curve: need at least two grid points");
  if (!(total_h >= 0.0 && total_h <= 1.0)) throw ConfigError("efficiency curve: total H must lie in [0, 1]");
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (i > 0 && !(grid_[i] > grid_[i - 1]))
      throw ConfigError("efficiency curve: grid not strictly increasing at index " + std::to_string(i));
    if (!(eta_[i] >= 0.0) || !std::isfinite(eta_[i]))
      throw ConfigError("efficiency curve: eta negative or non-finite at index " + std::to_string(i));
  }
  const double area = numeric::trapezoid(grid_, eta_);
  if (total_h == 0.0) {
    std::fill(eta_.begin(), eta_.end(), 0.0);
    return;
  }
  if (!(area > 0.0)) throw ConfigError("efficiency curve: shape has zero area");
  for (auto& e : eta_) e *= total_h / area;
}

EfficiencyCurve EfficiencyCurve::from_normalized(std::vector<double> grid_nm, std::vector<double> eta,
                                                 double total_h) {
  EfficiencyCurve curve(grid_nm, eta, total_h);
  const double area = numeric::trapezoid(grid_nm, eta);
  if (std::abs(area - total_h) > 1e-6 * std::max(total_h, 1e-300) + 1e-300)
    throw ConfigError("efficiency curve: integral " + std::to_string(area) + " does not match total H " +
                      std::to_string(total_h));
  curve.eta_ = std::move(eta);
  return curve;
}

EfficiencyCurve EfficiencyCurve::flat_window(double lambda_min, double lambda_max, double total_h,
                                             double margin_nm) {
  if (!(lambda_max > lambda_min)) throw ConfigError("efficiency window: lambda_min must be below lambda_max");
  // Nodes sit half a step either side of the edges so the interpolated step
  // integrates to exactly level * (lambda_max - lambda_min).
  const double width = lambda_max - lambda_min;
  const auto inside = std::max<long>(1, std::lround(width / spectral::kSamplingStepNm));
  const double step = width / static_cast<double>(inside);
  const auto outside = static_cast<long>(std::ceil(std::max(margin_nm, step) / step));
  std::vector<double> grid;
  std::vector<double> shape;
  for (long j = -outside; j < inside + outside; ++j) {
    grid.push_back(lambda_min + (static_cast<double>(j) + 0.5) * step);
    shape.push_back(j >= 0 && j < inside ? 1.0 : 0.0);
  }
  return EfficiencyCurve(std::move(grid), std::move(shape), total_h);
}

double EfficiencyCurve::operator()(double lambda_nm) const { return numeric::interp_linear(grid_, eta_, lambda_nm); }

double EfficiencyCurve::peak() const { return eta_.empty() ? 0.0 : *std::max_element(eta_.begin(), eta_.end()); }

double EfficiencyCurve::integral() const { return numeric::trapezoid(grid_, eta_); }

void InstrumentConfig::validate() const {
  auto fail = [this](const std::string& msg) { throw ConfigError("instrument '" + name + "': " + msg); };
  if (gdd_ps_per_nm == 0.0 || !std::isfinite(gdd_ps_per_nm)) fail("gdd_D must be finite and nonzero");
  if (!lambda0.valid()) fail("lambda0 must be finite and positive");
  if (!std::isfinite(delta_tau_ps)) fail("delta_tau must be finite");
  if (!(window_min_nm < lambda0.value && lambda0.value < window_max_nm))
    fail("window must satisfy lambda_min < lambda0 < lambda_max");
  if (!(reflectivity >= 0.0 && reflectivity <= 1.0)) fail("reflectivity_R must lie in [0, 1]");
  if (efficiency.empty()) fail("efficiency curve is empty");
  if (!(jitter_fwhm_ps >= 0.0)) fail("jitter_fwhm must be >= 0");
  if (!(dark_rate_hz >= 0.0)) fail("dark_rate must be >= 0");
  if (!(dead_time_ps >= 0.0)) fail("dead_time must be >= 0");
  if (!(clock_period_ps > 0.0)) fail("clock_period must be > 0");
  if (!(histogram_bin_ps > 0.0)) fail("histogram_bin must be > 0");
  if (!(tdc_quantum_ps >= 1.0)) fail("tdc_quantum must be >= 1 ps");
  if (splice_artifact) {
    const auto& s = *splice_artifact;
    if (!(s.relative_amplitude >= 0.0) || !(s.fwhm_nm > 0.0)) fail("splice artifact needs amplitude >= 0 and fwhm > 0");
    if (s.center.value < efficiency.grid().front() || s.center.value > efficiency.grid().back())
      fail("splice artifact lies outside the efficiency grid");
  }
}

EfficiencyCurve InstrumentConfig::effective_efficiency() const {
  if (!splice_artifact || splice_artifact->relative_amplitude == 0.0) return efficiency;
  const auto& s = *splice_artifact;
  const double level = efficiency.peak();
  const double sigma = fwhm_to_sigma(s.fwhm_nm);
  std::vector<double> shape = efficiency.eta();
  const auto& grid = efficiency.grid();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double z = (grid[i] - s.center.value) / sigma;
    shape[i] += s.relative_amplitude * level * std::exp(-0.5 * z * z);
  }
  return EfficiencyCurve(grid, std::move(shape), efficiency.total_h());
}

DetectorPreset fast_detector() { return {"fast", 52.0, 0.10}; }

DetectorPreset slow_detector() { return {"slow", 200.0, 0.40}; }

InstrumentConfig with_detector(InstrumentConfig cfg, const DetectorPreset& det, double optical_transmission) {
  if (!(optical_transmission >= 0.0 && optical_transmission <= 1.0))
    throw ConfigError("optical transmission must lie in [0, 1]");
  cfg.jitter_fwhm_ps = det.jitter_fwhm_ps;
  cfg.efficiency = EfficiencyCurve::flat_window(cfg.window_min_nm, cfg.window_max_nm,
                                                optical_transmission * det.quantum_efficiency);
  return cfg;
}

double map_wavelength_to_time(const InstrumentConfig& cfg, WavelengthNm lambda) {
  return cfg.dispersion().to_time(lambda);
}

WavelengthNm invert_time_to_wavelength(const InstrumentConfig& cfg, double tau_ps) {
  return cfg.dispersion().to_wavelength(tau_ps);
}

double resolution(const InstrumentConfig& cfg) {
  if (cfg.gdd_ps_per_nm == 0.0) throw ConfigError("resolution: GDD is zero");
  return cfg.jitter_fwhm_ps / std::abs(cfg.gdd_ps_per_nm);
}

AcceptanceModel::AcceptanceModel(const InstrumentConfig& cfg) : curve_(cfg.effective_efficiency()) {
  scale_ = cfg.window_width_nm();
  const double worst = curve_.peak() * scale_;
  if (worst > 1.0 + 1e-9) {
    throw ConfigError("instrument '" + cfg.name + "': peak acceptance eta*window = " + std::to_string(worst) +
                      " exceeds 1; lower total H or flatten the efficiency curve");
  }
}

double AcceptanceModel::operator()(double lambda_nm) const { return std::min(1.0, curve_(lambda_nm) * scale_); }

}  // namespace tofspec::instrument
