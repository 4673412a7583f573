#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tofspec/calibrate.hpp"
#include "tofspec/instrument.hpp"
#include "tofspec/reconstruct.hpp"
#include "tofspec/timetag.hpp"

namespace testsupport {

// Small hand-rolled generator for property tests.
struct Gen {
  std::mt19937_64 engine;
  explicit Gen(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(engine() >> 11) * 0x1.0p-53;
  }
  std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) {  // inclusive
    return lo + engine() % (hi - lo + 1);
  }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
};

// Random well-formed stream: per-channel strictly increasing timestamps,
// globally sorted.
inline tofspec::timetag::TagStream random_stream(Gen& g, std::size_t n_tags, std::uint16_t channels,
                                                 std::uint64_t max_gap) {
  tofspec::timetag::TagStream s;
  s.channel_count = channels;
  s.clock_period_ps = 12500;
  std::uint64_t t = g.integer(0, 1000);
  for (std::size_t i = 0; i < n_tags; ++i) {
    t += g.integer(1, max_gap);
    s.tags.push_back({t, static_cast<std::uint8_t>(g.integer(0, channels - 1u))});
  }
  return s;
}

inline std::vector<oracle::Tag> oracle_tags(const tofspec::timetag::TagStream& s) {
  std::vector<oracle::Tag> out;
  out.reserve(s.tags.size());
  for (const auto& t : s.tags) out.push_back({t.timestamp_ps, t.channel});
  return out;
}

// Histogram covering one clock period with bin centres on multiples of the
// bin width, as the command-line tool builds it.
inline tofspec::timetag::HistogramSpec cycle_spec(const tofspec::timetag::TagStream& s, double bin,
                                                  std::uint8_t channel = tofspec::timetag::kSignalChannel) {
  tofspec::timetag::HistogramSpec spec;
  spec.stop_channel = channel;
  spec.bin_width_ps = bin;
  spec.origin_ps = -0.5 * bin;
  spec.n_bins = static_cast<std::size_t>(std::ceil((static_cast<double>(s.clock_period_ps) + 0.5 * bin) / bin));
  return spec;
}

// Calibration that knows the instrument exactly.
inline tofspec::calibrate::CalibrationResult exact_calibration(const tofspec::instrument::InstrumentConfig& cfg) {
  tofspec::calibrate::CalibrationResult c;
  c.map = cfg.dispersion();
  c.efficiency = cfg.effective_efficiency();
  c.jitter_fwhm_ps = cfg.jitter_fwhm_ps;
  c.histogram_bin_ps = cfg.histogram_bin_ps;
  return c;
}

inline tofspec::reconstruct::ReconstructedSpectrum reconstruct_run(const tofspec::timetag::TagStream& s,
                                                                   const tofspec::instrument::InstrumentConfig& cfg) {
  const auto hist = tofspec::timetag::build_histogram(s, cycle_spec(s, cfg.histogram_bin_ps));
  return tofspec::reconstruct::reconstruct_spectrum(hist, exact_calibration(cfg));
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("tofspec_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testsupport
