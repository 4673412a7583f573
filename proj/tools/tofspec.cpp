// tofspec: simulate, calibrate and reconstruct time-of-flight spectra.
//
// Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tofspec/calibrate.hpp"
#include "tofspec/config_io.hpp"
#include "tofspec/error.hpp"
#include "tofspec/instrument.hpp"
#include "tofspec/reconstruct.hpp"
#include "tofspec/rng.hpp"
#include "tofspec/spectral_model.hpp"
#include "tofspec/tables.hpp"
#include "tofspec/timetag.hpp"

namespace fs = std::filesystem;
using namespace tofspec;
using nlohmann::ordered_json;
using tables::format_double;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::uint64_t parse_count(const std::string& text, const char* what) {
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + ": not a number: " + text);
  }
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e18)
    throw ConfigError(std::string(what) + " must be a non-negative whole number, got " + text);
  return static_cast<std::uint64_t>(v);
}

unsigned worker_count(unsigned requested) {
  return requested ? requested : std::max(1u, std::thread::hardware_concurrency());
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string file_digest(const fs::path& path) { return tables::fnv1a_hex(tables::read_file(path)); }

// Bins centred on multiples of the bin width, so delays quantized to that
// width land mid-bin.
timetag::HistogramSpec histogram_spec(const timetag::TagStream& stream, std::uint8_t channel, double bin) {
  if (!(bin > 0.0)) throw ConfigError("histogram bin width must be positive");
  timetag::HistogramSpec spec;
  spec.stop_channel = channel;
  spec.bin_width_ps = bin;
  spec.origin_ps = -0.5 * bin;
  spec.n_bins = static_cast<std::size_t>(std::ceil((static_cast<double>(stream.clock_period_ps) + 0.5 * bin) / bin));
  return spec;
}

timetag::Histogram histogram_of(const timetag::TagStream& stream, std::uint8_t channel, double bin, unsigned threads) {
  if (channel >= stream.channel_count)
    throw ConfigError("channel " + std::to_string(channel) + " is not present (file has " +
                      std::to_string(stream.channel_count) + " channels)");
  return timetag::build_histogram_chunked(stream, histogram_spec(stream, channel, bin), worker_count(threads));
}

instrument::InstrumentConfig resolve_instrument(const std::string& preset, const std::string& file,
                                                const std::string& preset_dir) {
  if (!file.empty()) return config::load_instrument(file);
  if (!preset.empty()) return config::find_preset(preset, preset_dir);
  throw ConfigError("one of --preset or --instrument is required");
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset;
  std::string instrument;
  std::string preset_idler;
  std::string instrument_idler;
  std::string preset_dir;
  std::string source;
  std::string cycles = "0";
  std::uint64_t seed = 0;
  double herald_efficiency = 1.0;
  double pair_rate = 0.05;
  std::string trigger_mode = "on-detection";
  unsigned threads = 0;
  std::string out;
  std::string csv_out;
  std::string delay_scan;
  std::size_t scan_points = 11;
  double scan_noise_ps = 5.0;
  std::string source_table;
};

void write_source_table(const fs::path& path, const spectral::SpectralSource& source) {
  const spectral::WavelengthSampler sampler(source);
  const double lo = sampler.support_min();
  const double hi = sampler.support_max();
  const double step = std::min(0.01, (hi - lo) / 200.0);
  tables::Table t;
  t.columns = {"lambda_nm", "density"};
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step));
  for (std::size_t i = 0; i <= n; ++i) {
    const double l = lo + static_cast<double>(i) * step;
    t.rows.push_back({l, spectral::eval_density(source, WavelengthNm(l))});
  }
  tables::write_table(path, t, tables::Format::kCsv);
}

void write_delay_scan(const SimulateArgs& a, const instrument::InstrumentConfig& cfg) {
  if (a.scan_points < 2) throw ConfigError("--scan-points must be at least 2");
  // A separate substream keeps the scan independent of the tag stream.
  RandomStream rng(a.seed, 0xdE1A7ULL);
  std::vector<calibrate::DelayPoint> points;
  for (std::size_t k = 0; k < a.scan_points; ++k) {
    const double l = cfg.window_min_nm +
                     (cfg.window_max_nm - cfg.window_min_nm) * static_cast<double>(k) / static_cast<double>(a.scan_points - 1);
    const double noise = a.scan_noise_ps > 0.0 ? a.scan_noise_ps * rng.normal() : 0.0;
    points.push_back({l, instrument::map_wavelength_to_time(cfg, WavelengthNm(l)) + noise, std::nullopt});
  }
  calibrate::write_delay_points(a.delay_scan, points);
}

int cmd_simulate(const SimulateArgs& a) {
  const spectral::SpectralSource source = config::parse_source(a.source);
  const instrument::InstrumentConfig cfg = resolve_instrument(a.preset, a.instrument, a.preset_dir);
  instrument::RunOptions opt;
  opt.n_cycles = parse_count(a.cycles, "--cycles");
  opt.seed = a.seed;
  opt.threads = a.threads;
  if (a.trigger_mode == "on-detection")
    opt.trigger_mode = instrument::TriggerMode::kOnDetection;
  else if (a.trigger_mode == "every-cycle")
    opt.trigger_mode = instrument::TriggerMode::kEveryCycle;
  else
    throw ConfigError("--trigger-mode must be on-detection or every-cycle");

  ordered_json manifest;
  manifest["tool"] = "tofspec";
  manifest["version"] = TOFSPEC_VERSION;
  manifest["git_describe"] = TOFSPEC_GIT_DESCRIBE;
  manifest["command"] = "simulate";
  manifest["seed"] = a.seed;
  manifest["cycles"] = opt.n_cycles;
  manifest["source_spec"] = a.source;
  manifest["source"] = spectral::describe(source);
  manifest["instrument"] = ordered_json::parse(config::instrument_to_json(cfg));

  instrument::SimulationResult result;
  if (const auto* pair = std::get_if<spectral::PairGaussian>(&source)) {
    instrument::InstrumentConfig idler = cfg;
    if (!a.instrument_idler.empty() || !a.preset_idler.empty())
      idler = resolve_instrument(a.preset_idler, a.instrument_idler, a.preset_dir);
    manifest["instrument_idler"] = ordered_json::parse(config::instrument_to_json(idler));
    manifest["pair_rate"] = a.pair_rate;
    manifest["trigger_mode"] = a.trigger_mode;
    result = instrument::simulate_pair_run(*pair, a.pair_rate, cfg, idler, opt);
  } else {
    manifest["herald_efficiency"] = a.herald_efficiency;
    result = instrument::simulate_run(source, a.herald_efficiency, cfg, opt);
  }

  timetag::write_tags(fs::path(a.out), result.stream);
  if (!a.csv_out.empty()) timetag::write_tags_csv(fs::path(a.csv_out), result.stream);
  if (!a.delay_scan.empty()) write_delay_scan(a, cfg);
  if (!a.source_table.empty()) write_source_table(a.source_table, source);

  const auto& st = result.stats;
  ordered_json counts;
  for (std::uint8_t ch = 0; ch < result.stream.channel_count; ++ch)
    counts["channel_" + std::to_string(ch)] = result.stream.count(ch);
  manifest["tag_counts"] = counts;
  manifest["stats"] = {{"heralds_or_pairs", st.heralds},        {"photons_detected", st.photons_detected},
                       {"dark_counts", st.dark_counts},         {"lost_same_cycle", st.lost_same_cycle},
                       {"lost_dead_time", st.lost_dead_time},   {"lost_negative_time", st.lost_negative_time}};
  manifest["output"] = fs::path(a.out).filename().string();
  std::ofstream(a.out + ".manifest.json") << manifest.dump(2) << '\n';

  std::cout << "wrote " << a.out << ": " << result.stream.tags.size() << " tags over " << opt.n_cycles << " cycles";
  for (std::uint8_t ch = 1; ch < result.stream.channel_count; ++ch)
    std::cout << ", channel " << int(ch) << ": " << result.stream.count(ch);
  std::cout << '\n';
  return 0;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string delays;
  std::string narrowband;
  double narrowband_lambda = 830.0;
  std::string broadband;
  std::string reference;
  double total_h = 0.0;
  int degree = 1;
  double lambda0 = 830.0;
  double bin = 32.0;
  double jitter_ps = 0.0;
  int channel = 1;
  unsigned threads = 0;
  std::string out;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const auto delays = calibrate::read_delay_points(a.delays);
  const auto reference = spectral::load_tabulated(a.reference);
  const auto ch = static_cast<std::uint8_t>(a.channel);
  const auto narrow = histogram_of(timetag::read_tags(fs::path(a.narrowband)), ch, a.bin, a.threads);
  const auto broad = histogram_of(timetag::read_tags(fs::path(a.broadband)), ch, a.bin, a.threads);

  const calibrate::GddFit gdd = calibrate::fit_gdd(delays, a.degree, WavelengthNm(a.lambda0));
  calibrate::CalibrationResult result =
      calibrate::calibrate(delays, a.degree, WavelengthNm(a.lambda0), narrow, WavelengthNm(a.narrowband_lambda), broad,
                           reference, a.total_h);
  result.jitter_fwhm_ps = a.jitter_ps;
  calibrate::write_calibration(fs::path(a.out), result);

  std::cout << "D = " << fixed(result.map.gdd_ps_per_nm, 3) << " +- " << fixed(result.sigma_gdd, 3) << " ps/nm\n";
  std::cout << "delta_tau = " << fixed(result.map.delta_tau_ps, 2) << " +- " << fixed(result.sigma_delta_tau, 2)
            << " ps\n";
  std::cout << "delay fit: " << delays.size() << " points, residual rms " << fixed(result.fit_residual_rms_ps, 3)
            << " ps\n";
  if (a.degree == 2) {
    double reach = 0.0;
    for (const auto& d : delays) reach = std::max(reach, std::abs(d.lambda_nm - a.lambda0));
    std::cout << "quadratic = " << format_double(gdd.quadratic_ps_per_nm2) << " +- "
              << format_double(gdd.sigma_quadratic) << " ps/nm^2 (" << fixed(gdd.quadratic_ps_per_nm2 * reach * reach, 3)
              << " ps at " << format_double(reach) << " nm from lambda0)\n";
  }
  if (result.jitter_fwhm_ps > 0.0)
    std::cout << "resolution = " << fixed(result.resolution_nm(), 4) << " nm FWHM\n";
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

// -------------------------------------------------------------- reconstruct

struct ReconstructArgs {
  std::string tags;
  std::string calibration;
  std::string calibration_b;
  std::string mode = "spectrum";
  std::string format = "csv";
  std::string out;
  double bin = 0.0;
  double bin_b = 0.0;
  int channel = 1;
  int channel_b = 2;
  bool fringes = false;
  double fringe_period = 0.0;
  double fringe_delay_ps = 0.0;
  unsigned threads = 0;
};

double pick_bin(double requested, const calibrate::CalibrationResult& c) {
  if (requested > 0.0) return requested;
  if (c.histogram_bin_ps > 0.0) return c.histogram_bin_ps;
  return 32.0;
}

std::string describe_fit(const reconstruct::ReconstructedSpectrum& spec) {
  std::ostringstream os;
  try {
    const auto g = reconstruct::fit_gaussian(spec);
    os << "FWHM " << fixed(g.fwhm_nm, 4) << " +- " << fixed(g.sigma_fwhm_nm, 4) << " nm at " << fixed(g.center_nm, 3)
       << " nm";
  } catch (const Error& e) {
    os << "FWHM fit failed (" << e.what() << ")";
  }
  return os.str();
}

void print_fringes(const reconstruct::ReconstructedSpectrum& spec, const ReconstructArgs& a) {
  reconstruct::FringeFitOptions opt;
  if (a.fringe_period > 0.0) opt.fixed_period_nm = a.fringe_period;
  if (a.fringe_delay_ps > 0.0) {
    const auto g = reconstruct::fit_gaussian(spec);
    opt.fixed_period_nm = spectral::fringe_period(a.fringe_delay_ps, WavelengthNm(g.center_nm));
  }
  const auto f = reconstruct::fit_fringes(spec, opt);
  std::cout << "fringes: period " << fixed(f.period_nm, 4) << " nm" << (f.period_fixed ? " (fixed)" : "")
            << ", visibility " << fixed(f.visibility, 3) << ", phase " << fixed(f.phase_rad, 3) << " rad at "
            << fixed(f.phase_reference_nm, 3) << " nm, reduced chi2 " << fixed(f.reduced_chi2, 2) << '\n';
}

int cmd_reconstruct(const ReconstructArgs& a) {
  const auto format = tables::parse_format(a.format);
  const timetag::TagStream stream = timetag::read_tags(fs::path(a.tags));
  const auto calib = calibrate::read_calibration(fs::path(a.calibration));
  tables::Table t;
  t.comments.push_back("tags " + fs::path(a.tags).filename().string() + " fnv1a=" + file_digest(a.tags));
  t.comments.push_back("calibration " + fs::path(a.calibration).filename().string() +
                       " fnv1a=" + file_digest(a.calibration));

  if (a.mode == "spectrum") {
    if (stream.channel_count > 2 && a.channel == 1)
      std::cerr << "warning: " << a.tags << " has " << stream.channel_count
                << " channels; spectrum mode uses channel 1 only\n";
    const double bin = pick_bin(a.bin, calib);
    const auto hist = histogram_of(stream, static_cast<std::uint8_t>(a.channel), bin, a.threads);
    const auto spec = reconstruct::reconstruct_spectrum(hist, calib);
    t.comments.push_back("bin_width_nm=" + format_double(spec.bin_width_nm));
    t.comments.push_back("resolution_fwhm_nm=" + format_double(spec.resolution_fwhm_nm));
    t.columns = {"lambda_nm", "raw", "corrected", "sigma", "masked"};
    for (std::size_t i = 0; i < spec.size(); ++i)
      t.rows.push_back({spec.lambda_nm[i], static_cast<double>(spec.raw[i]), spec.corrected[i], spec.stat_sigma[i],
                        spec.masked[i] ? 1.0 : 0.0});
    tables::write_table(fs::path(a.out), t, format);
    std::cout << "spectrum: " << hist.total() << " counts (" << format_double(spec.unmasked_raw_total())
              << " unmasked, " << hist.dropped.total() << " dropped), " << describe_fit(spec) << '\n';
    if (a.fringes || a.fringe_period > 0.0 || a.fringe_delay_ps > 0.0) print_fringes(spec, a);
  } else if (a.mode == "jsi") {
    if (a.calibration_b.empty()) throw ConfigError("jsi mode needs --calibration-b for the idler channel");
    const auto calib_b = calibrate::read_calibration(fs::path(a.calibration_b));
    t.comments.push_back("calibration_b " + fs::path(a.calibration_b).filename().string() +
                         " fnv1a=" + file_digest(a.calibration_b));
    const auto pairs = timetag::coincidence_pairs(stream, static_cast<std::uint8_t>(a.channel),
                                                  static_cast<std::uint8_t>(a.channel_b));
    const double bin_a = pick_bin(a.bin, calib);
    const double bin_b = a.bin_b > 0.0 ? a.bin_b : pick_bin(a.bin, calib_b);
    const auto jsi = reconstruct::reconstruct_jsi(pairs, calib, calib_b, bin_a, bin_b, worker_count(a.threads));
    t.columns = {"lambda_s", "lambda_i", "raw", "corrected", "masked"};
    for (std::size_t i = 0; i < jsi.signal_nm.size(); ++i)
      for (std::size_t j = 0; j < jsi.idler_nm.size(); ++j)
        t.rows.push_back({jsi.signal_nm[i], jsi.idler_nm[j], static_cast<double>(jsi.raw[jsi.index(i, j)]),
                          jsi.corrected[jsi.index(i, j)], jsi.cell_masked(i, j) ? 1.0 : 0.0});
    tables::write_table(fs::path(a.out), t, format);
    std::cout << "jsi: " << pairs.size() << " coincidences (" << format_double(jsi.unmasked_raw_total())
              << " unmasked, " << jsi.dropped << " outside the grid)\n";
    std::cout << "signal marginal: " << describe_fit(reconstruct::marginal(jsi, reconstruct::Axis::kSignal)) << '\n';
    std::cout << "idler marginal: " << describe_fit(reconstruct::marginal(jsi, reconstruct::Axis::kIdler)) << '\n';
    std::string corr;
    try {
      corr = fixed(reconstruct::grid_correlation(jsi), 4);
    } catch (const AnalysisError& e) {
      corr = std::string("n/a (") + e.what() + ")";
    }
    std::cout << "correlation: " << corr << '\n';
  } else {
    throw ConfigError("--mode must be spectrum or jsi");
  }
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

// ------------------------------------------------------------------ analyze

struct AnalyzeArgs {
  std::string spectrum;
  std::string tags;
  std::string out;
  std::string format = "csv";
  double bin = 32.0;
  int channel = 1;
  bool fringes = false;
  double fringe_period = 0.0;
  unsigned threads = 0;
};

// Rebuilds a spectrum from a reconstruct table; the correction factor of each
// bin follows from sigma^2 / corrected.
reconstruct::ReconstructedSpectrum load_spectrum_table(const fs::path& path) {
  const std::string text = tables::read_file(path);
  std::istringstream in(text);
  const auto table = tables::parse_numeric_table(in, 5, path.string());
  reconstruct::ReconstructedSpectrum s;
  for (const auto& row : table.rows) {
    s.lambda_nm.push_back(row[0]);
    s.raw.push_back(static_cast<std::uint64_t>(std::llround(row[1])));
    s.corrected.push_back(row[2]);
    s.stat_sigma.push_back(row[3]);
    s.masked.push_back(row[4] != 0.0);
    s.correction.push_back(row[1] > 0.0 && row[2] > 0.0 ? row[3] * row[3] / row[2] : 0.0);
  }
  if (s.size() < 2) throw ConfigError(path.string() + ": spectrum table needs at least two rows");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.masked[i] || s.correction[i] > 0.0) continue;
    double best = 0.0;
    for (std::size_t d = 1; d < s.size() && best == 0.0; ++d) {
      if (i >= d && s.correction[i - d] > 0.0) best = s.correction[i - d];
      else if (i + d < s.size() && s.correction[i + d] > 0.0) best = s.correction[i + d];
    }
    s.correction[i] = best > 0.0 ? best : 1.0;
  }
  s.bin_width_nm = std::abs(s.lambda_nm[1] - s.lambda_nm[0]);
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    constexpr std::string_view res_key = "# resolution_fwhm_nm=";
    constexpr std::string_view bin_key = "# bin_width_nm=";
    if (line.rfind(res_key, 0) == 0) s.resolution_fwhm_nm = std::stod(line.substr(res_key.size()));
    if (line.rfind(bin_key, 0) == 0) s.bin_width_nm = std::stod(line.substr(bin_key.size()));
  }
  return s;
}

int cmd_analyze(const AnalyzeArgs& a) {
  if (a.spectrum.empty() == a.tags.empty()) throw ConfigError("give exactly one of --spectrum or --tags");
  if (!a.tags.empty()) {
    if (a.out.empty()) throw ConfigError("--tags needs --out for the histogram table");
    const auto stream = timetag::read_tags(fs::path(a.tags));
    const auto hist = histogram_of(stream, static_cast<std::uint8_t>(a.channel), a.bin, a.threads);
    tables::Table t;
    t.comments.push_back("tags " + fs::path(a.tags).filename().string() + " fnv1a=" + file_digest(a.tags));
    t.columns = {"tau_ps", "counts"};
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
      t.rows.push_back({hist.bin_center(i), static_cast<double>(hist.counts[i])});
    tables::write_table(fs::path(a.out), t, tables::parse_format(a.format));
    std::cout << "histogram: " << hist.total() << " counts in " << hist.counts.size() << " bins; dropped "
              << hist.dropped.no_trigger << " without trigger, " << hist.dropped.out_of_range << " out of range\n";
    std::cout << "wrote " << a.out << '\n';
    return 0;
  }
  const auto spec = load_spectrum_table(a.spectrum);
  std::cout << "spectrum: " << format_double(spec.unmasked_raw_total()) << " unmasked counts, " << describe_fit(spec)
            << '\n';
  std::string width;
  try {
    width = fixed(reconstruct::measure_fwhm(spec), 4) + " nm";
  } catch (const AnalysisError& e) {
    width = std::string("n/a (") + e.what() + ")";
  }
  std::cout << "half-maximum width: " << width << '\n';
  if (a.fringes || a.fringe_period > 0.0) {
    ReconstructArgs r;
    r.fringe_period = a.fringe_period;
    print_fringes(spec, r);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-of-flight single-photon spectrometer toolkit"};
  app.set_version_flag("--version", std::string(TOFSPEC_VERSION) + " (" + TOFSPEC_GIT_DESCRIBE + ")");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a time-tag file from a source and instrument");
  s->add_option("--preset", sim.preset, "Instrument preset name (signal channel)");
  s->add_option("--instrument", sim.instrument, "Instrument config JSON (signal channel)")->check(CLI::ExistingFile);
  s->add_option("--preset-idler", sim.preset_idler, "Instrument preset for the idler channel of a pair source");
  s->add_option("--instrument-idler", sim.instrument_idler, "Instrument config JSON for the idler channel")
      ->check(CLI::ExistingFile);
  s->add_option("--preset-dir", sim.preset_dir, "Extra directory searched for presets");
  s->add_option("--source", sim.source, "Source spec, e.g. gaussian:center=830,fwhm=2")->required();
  s->add_option("--cycles", sim.cycles, "Number of clock cycles (scientific notation accepted)")->required();
  s->add_option("--seed", sim.seed, "Random seed")->required();
  s->add_option("--herald-efficiency", sim.herald_efficiency, "Herald probability per cycle (single sources)");
  s->add_option("--pair-rate", sim.pair_rate, "Pair probability per cycle (pair sources)");
  s->add_option("--trigger-mode", sim.trigger_mode, "Pair runs: on-detection or every-cycle");
  s->add_option("--threads", sim.threads, "Worker threads (0: all cores)");
  s->add_option("--out", sim.out, "Output TTAG file")->required();
  s->add_option("--csv", sim.csv_out, "Also write a CSV mirror of the tags");
  s->add_option("--emit-delay-scan", sim.delay_scan, "Write a synthetic delay scan CSV for calibration");
  s->add_option("--scan-points", sim.scan_points, "Delay scan points across the window");
  s->add_option("--scan-noise-ps", sim.scan_noise_ps, "Gaussian noise on each delay point");
  s->add_option("--emit-source-table", sim.source_table, "Write the source density as a reference spectrum CSV");

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Fit D, delta_tau and eta from calibration data");
  c->add_option("--delays", cal.delays, "Delay scan CSV (lambda_nm, delay_ps[, sigma_ps])")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--narrowband", cal.narrowband, "Tag file of the narrowband filter run")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--narrowband-lambda", cal.narrowband_lambda, "Centre wavelength of the narrowband filter");
  c->add_option("--broadband", cal.broadband, "Tag file of the broadband run used for eta")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--reference", cal.reference, "Reference input spectrum CSV (lambda_nm, density)")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--H", cal.total_h, "Total heralding efficiency")->required();
  c->add_option("--degree", cal.degree, "Delay polynomial degree (1 or 2)");
  c->add_option("--lambda0", cal.lambda0, "Reference wavelength of the map");
  c->add_option("--bin", cal.bin, "Histogram bin width in ps");
  c->add_option("--jitter-ps", cal.jitter_ps, "System timing jitter FWHM, recorded for resolution estimates");
  c->add_option("--channel", cal.channel, "Stop channel");
  c->add_option("--threads", cal.threads, "Worker threads (0: all cores)");
  c->add_option("--out", cal.out, "Output calibration file")->required();

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "Efficiency-corrected spectrum or JSI from a tag file");
  r->add_option("--tags", rec.tags, "Input TTAG file")->required()->check(CLI::ExistingFile);
  r->add_option("--calibration", rec.calibration, "Calibration file (signal channel)")
      ->required()
      ->check(CLI::ExistingFile);
  r->add_option("--calibration-b", rec.calibration_b, "Calibration file of the idler channel (jsi mode)")
      ->check(CLI::ExistingFile);
  r->add_option("--mode", rec.mode, "spectrum or jsi");
  r->add_option("--format", rec.format, "csv or json");
  r->add_option("--out", rec.out, "Output table")->required();
  r->add_option("--bin", rec.bin, "Time bin width in ps (default: the calibration's)");
  r->add_option("--bin-b", rec.bin_b, "Idler time bin width in ps (jsi mode)");
  r->add_option("--channel", rec.channel, "Signal stop channel");
  r->add_option("--channel-b", rec.channel_b, "Idler stop channel (jsi mode)");
  r->add_flag("--fringes", rec.fringes, "Fit spectral fringes with a free period");
  r->add_option("--fringe-period", rec.fringe_period, "Fit fringes with this fixed period in nm");
  r->add_option("--fringe-delay-ps", rec.fringe_delay_ps, "Fit fringes with the period set by this pulse delay");
  r->add_option("--threads", rec.threads, "Worker threads (0: all cores)");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Histogram a tag file or fit a reconstructed spectrum table");
  z->add_option("--spectrum", an.spectrum, "Spectrum table written by reconstruct (csv)")->check(CLI::ExistingFile);
  z->add_option("--tags", an.tags, "TTAG file to histogram")->check(CLI::ExistingFile);
  z->add_option("--out", an.out, "Output table (with --tags)");
  z->add_option("--format", an.format, "csv or json");
  z->add_option("--bin", an.bin, "Histogram bin width in ps");
  z->add_option("--channel", an.channel, "Stop channel");
  z->add_flag("--fringes", an.fringes, "Fit spectral fringes with a free period");
  z->add_option("--fringe-period", an.fringe_period, "Fit fringes with this fixed period in nm");
  z->add_option("--threads", an.threads, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (c->parsed()) return cmd_calibrate(cal);
    if (r->parsed()) return cmd_reconstruct(rec);
    if (z->parsed()) return cmd_analyze(an);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
