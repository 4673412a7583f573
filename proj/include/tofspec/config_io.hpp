#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tofspec/instrument.hpp"
#include "tofspec/spectral_model.hpp"

namespace tofspec::config {

// Instrument configs are JSON objects whose keys follow InstrumentConfig:
//   name, gdd_D, lambda0, delta_tau, window: [min, max], reflectivity_R,
//   efficiency_curve, jitter_fwhm, dark_rate, dead_time, clock_period,
//   histogram_bin, tdc_quantum, splice_artifact
// efficiency_curve is either {"model": "flat_window", "total_H": h} or
// {"grid": [...], "eta": [...], "total_H": h}. Missing keys keep defaults;
// unknown keys are rejected.
instrument::InstrumentConfig parse_instrument(std::string_view json_text, const std::string& source_name);
instrument::InstrumentConfig load_instrument(const std::filesystem::path& path);
std::string instrument_to_json(const instrument::InstrumentConfig& cfg);

/// Directories searched for "<name>.json", in order: `extra`, then
/// $TOFSPEC_PRESET_DIR, then the presets installed with the build.
std::vector<std::filesystem::path> preset_dirs(const std::filesystem::path& extra = {});

/// Loads a preset by case-insensitive name. Throws ConfigError naming the
/// preset and the directories searched when it does not exist.
instrument::InstrumentConfig find_preset(const std::string& name, const std::filesystem::path& extra_dir = {});

/// Parses a source specification such as
///   gaussian:center=830,fwhm=2
///   mono:center=830
///   doublepulse:T=11ps,V=0.24,phase=0,center=830,fwhm=2
///   pair:signal=2,idler=8,rho=0,center=830
///   tabulated:path/to/spectrum.csv
/// Unit suffixes "nm", "ps" and "rad" are accepted and ignored.
spectral::SpectralSource parse_source(std::string_view spec);

/// FWHM used for "mono" sources: narrow enough to be a delta line for any
/// realistic jitter.
inline constexpr double kMonochromaticFwhmNm = 1e-4;

}  // namespace tofspec::config
