#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tofspec/spectral_model.hpp"
#include "tofspec/timetag.hpp"
#include "tofspec/units.hpp"

namespace tofspec::instrument {

/// Linear frequency-to-time map tau = D (lambda - lambda0) + delta_tau.
/// Positive D means longer wavelengths arrive later.
struct DispersionMap {
  double gdd_ps_per_nm = 950.0;
  WavelengthNm lambda0{830.0};
  double delta_tau_ps = 0.0;

  double to_time(WavelengthNm lambda) const {
    return gdd_ps_per_nm * (lambda.value - lambda0.value) + delta_tau_ps;
  }
  /// Throws ConfigError when D = 0.
  WavelengthNm to_wavelength(double tau_ps) const;
};

/// Heralded detection probability density eta(lambda) per nm, tabulated and
/// linearly interpolated, with integral total_H over the grid.
class EfficiencyCurve {
 public:
  EfficiencyCurve() = default;
  /// Rescales `shape` so that its trapezoid integral equals total_h.
  EfficiencyCurve(std::vector<double> grid_nm, std::vector<double> shape, double total_h);

  /// Takes `eta` as already normalized; throws ConfigError unless its
  /// integral matches total_h to 1e-6 (relative).
  static EfficiencyCurve from_normalized(std::vector<double> grid_nm, std::vector<double> eta, double total_h);

  /// Flat response on [lambda_min, lambda_max], zero outside, tabulated on a
  /// 1 pm grid that extends `margin_nm` beyond the window.
  static EfficiencyCurve flat_window(double lambda_min, double lambda_max, double total_h, double margin_nm = 1.0);

  double operator()(double lambda_nm) const;
  double peak() const;
  double integral() const;
  double total_h() const { return total_h_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& eta() const { return eta_; }
  bool empty() const { return grid_.empty(); }

  friend bool operator==(const EfficiencyCurve&, const EfficiencyCurve&) = default;

 private:
  std::vector<double> grid_;
  std::vector<double> eta_;
  double total_h_ = 0.0;
};

/// Back-reflection from a fiber splice, seen as a narrow bump on eta.
struct SpliceArtifact {
  WavelengthNm center{824.6};
  double relative_amplitude = 0.5;  // peak relative to the in-window eta level
  double fwhm_nm = 0.05;
};

/// Physical parameters of one spectrometer channel.
struct InstrumentConfig {
  std::string name = "custom";
  double gdd_ps_per_nm = 950.0;
  WavelengthNm lambda0{830.0};
  double delta_tau_ps = 6000.0;
  double window_min_nm = 825.0;
  double window_max_nm = 835.0;
  double reflectivity = 0.5;
  EfficiencyCurve efficiency = EfficiencyCurve::flat_window(825.0, 835.0, 0.01);
  double jitter_fwhm_ps = 52.0;
  double dark_rate_hz = 0.0;
  double dead_time_ps = 0.0;
  double clock_period_ps = 12500.0;  // 80 MHz
  double histogram_bin_ps = 32.0;
  double tdc_quantum_ps = 1.0;  // timestamps are floored to multiples of this
  std::optional<SpliceArtifact> splice_artifact;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  DispersionMap dispersion() const { return {gdd_ps_per_nm, lambda0, delta_tau_ps}; }
  double window_width_nm() const { return window_max_nm - window_min_nm; }

  /// The efficiency curve with the splice bump added, renormalized to the
  /// same total H.
  EfficiencyCurve effective_efficiency() const;
};

/// Single-photon detector timing/efficiency figures.
struct DetectorPreset {
  std::string name;
  double jitter_fwhm_ps = 0.0;
  double quantum_efficiency = 0.0;
};

/// Fast, less efficient SPAD; 52 ps is the end-to-end system spread.
DetectorPreset fast_detector();
/// Efficient, slow SPCM used for coincidence measurements.
DetectorPreset slow_detector();

/// Replaces jitter and efficiency of `cfg` with the detector's: total H
/// becomes optical_transmission * quantum_efficiency on a flat window.
InstrumentConfig with_detector(InstrumentConfig cfg, const DetectorPreset& det, double optical_transmission);

double map_wavelength_to_time(const InstrumentConfig& cfg, WavelengthNm lambda);
WavelengthNm invert_time_to_wavelength(const InstrumentConfig& cfg, double tau_ps);

/// Spectral resolution FWHM in nm: jitter / |D|.
double resolution(const InstrumentConfig& cfg);

/// Acceptance probability eta(lambda) * window width, checked <= 1.
class AcceptanceModel {
 public:
  explicit AcceptanceModel(const InstrumentConfig& cfg);
  double operator()(double lambda_nm) const;
  const EfficiencyCurve& curve() const { return curve_; }

 private:
  EfficiencyCurve curve_;
  double scale_ = 1.0;
};

enum class TriggerMode {
  kOnDetection,  // trigger tag only in cycles where some detector fired
  kEveryCycle,
};

struct RunOptions {
  std::uint64_t n_cycles = 1;
  std::uint64_t seed = 0;
  TriggerMode trigger_mode = TriggerMode::kOnDetection;
  std::uint64_t chunk_cycles = std::uint64_t{1} << 20;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct RunStats {
  std::uint64_t cycles = 0;
  std::uint64_t heralds = 0;        // heralded cycles (single) or generated pairs (pair runs)
  std::uint64_t photons_detected = 0;  // accepted photons before per-cycle and dead-time selection
  std::uint64_t dark_counts = 0;
  std::uint64_t lost_same_cycle = 0;  // later hits discarded by earliest-wins
  std::uint64_t lost_dead_time = 0;
  std::uint64_t lost_negative_time = 0;
};

struct SimulationResult {
  timetag::TagStream stream;
  RunStats stats;
};

/// Heralded single-photon run. Channel 0 carries the herald, which starts the
/// TDC; channel 1 carries the signal detections.
SimulationResult simulate_run(const spectral::SpectralSource& source, double herald_efficiency,
                              const InstrumentConfig& cfg, const RunOptions& options);

/// Photon-pair run. Channel 0 carries the clock trigger, channels 1 and 2 the
/// signal and idler detections of two independent spectrometers.
SimulationResult simulate_pair_run(const spectral::PairGaussian& source, double pair_rate,
                                   const InstrumentConfig& cfg_signal, const InstrumentConfig& cfg_idler,
                                   const RunOptions& options);

}  // namespace tofspec::instrument
