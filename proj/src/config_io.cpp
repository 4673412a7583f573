#include "tofspec/config_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <map>
#include <set>

#include "json.hpp"
#include "tofspec/error.hpp"
#include "tofspec/tables.hpp"

#ifndef TOFSPEC_PRESET_DIR
#define TOFSPEC_PRESET_DIR ""
#endif

namespace tofspec::config {

using nlohmann::ordered_json;

namespace {

double number(const ordered_json& j, const std::string& key, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
  return j.get<double>();
}

std::vector<double> number_list(const ordered_json& j, const std::string& key, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": '" + key + "' must be an array of numbers");
  std::vector<double> v;
  for (const auto& e : j) v.push_back(number(e, key, where));
  return v;
}

instrument::EfficiencyCurve parse_efficiency(const ordered_json& j, double window_min, double window_max,
                                             const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": 'efficiency_curve' must be an object");
  if (!j.contains("total_H")) throw ConfigError(where + ": efficiency_curve needs 'total_H'");
  const double h = number(j["total_H"], "total_H", where);
  if (j.contains("model")) {
    if (j["model"] != "flat_window") throw ConfigError(where + ": unknown efficiency model " + j["model"].dump());
    return instrument::EfficiencyCurve::flat_window(window_min, window_max, h);
  }
  if (!j.contains("grid") || !j.contains("eta"))
    throw ConfigError(where + ": efficiency_curve needs either 'model' or 'grid' and 'eta'");
  return instrument::EfficiencyCurve(number_list(j["grid"], "grid", where), number_list(j["eta"], "eta", where), h);
}

bool is_flat_window(const instrument::EfficiencyCurve& e, double lo, double hi) {
  return e == instrument::EfficiencyCurve::flat_window(lo, hi, e.total_h());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

instrument::InstrumentConfig parse_instrument(std::string_view json_text, const std::string& source_name) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw ConfigError(source_name + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(source_name + ": instrument config must be a JSON object");
  static const std::set<std::string> known{"name",        "gdd_D",          "lambda0",        "delta_tau",
                                           "window",      "reflectivity_R", "efficiency_curve", "jitter_fwhm",
                                           "dark_rate",   "dead_time",      "clock_period",   "histogram_bin",
                                           "tdc_quantum", "splice_artifact"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(source_name + ": unknown key '" + key + "'");

  instrument::InstrumentConfig cfg;
  const std::string& w = source_name;
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw ConfigError(w + ": 'name' must be a string");
    cfg.name = j["name"].get<std::string>();
  }
  if (j.contains("gdd_D")) cfg.gdd_ps_per_nm = number(j["gdd_D"], "gdd_D", w);
  if (j.contains("lambda0")) cfg.lambda0 = WavelengthNm(number(j["lambda0"], "lambda0", w));
  if (j.contains("delta_tau")) cfg.delta_tau_ps = number(j["delta_tau"], "delta_tau", w);
  if (j.contains("window")) {
    const auto win = number_list(j["window"], "window", w);
    if (win.size() != 2) throw ConfigError(w + ": 'window' must be [lambda_min, lambda_max]");
    cfg.window_min_nm = win[0];
    cfg.window_max_nm = win[1];
  }
  if (j.contains("reflectivity_R")) cfg.reflectivity = number(j["reflectivity_R"], "reflectivity_R", w);
  if (j.contains("jitter_fwhm")) cfg.jitter_fwhm_ps = number(j["jitter_fwhm"], "jitter_fwhm", w);
  if (j.contains("dark_rate")) cfg.dark_rate_hz = number(j["dark_rate"], "dark_rate", w);
  if (j.contains("dead_time")) cfg.dead_time_ps = number(j["dead_time"], "dead_time", w);
  if (j.contains("clock_period")) cfg.clock_period_ps = number(j["clock_period"], "clock_period", w);
  if (j.contains("histogram_bin")) cfg.histogram_bin_ps = number(j["histogram_bin"], "histogram_bin", w);
  if (j.contains("tdc_quantum")) cfg.tdc_quantum_ps = number(j["tdc_quantum"], "tdc_quantum", w);
  try {
    if (j.contains("efficiency_curve"))
      cfg.efficiency = parse_efficiency(j["efficiency_curve"], cfg.window_min_nm, cfg.window_max_nm, w);
    else
      cfg.efficiency = instrument::EfficiencyCurve::flat_window(cfg.window_min_nm, cfg.window_max_nm,
                                                                cfg.efficiency.total_h());
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.rfind(w, 0) == 0 ? msg : w + ": " + msg);
  }
  if (j.contains("splice_artifact") && !j["splice_artifact"].is_null()) {
    const auto& s = j["splice_artifact"];
    if (!s.is_object()) throw ConfigError(w + ": 'splice_artifact' must be an object or null");
    instrument::SpliceArtifact art;
    for (const auto& [key, _] : s.items())
      if (key != "center" && key != "relative_amplitude" && key != "fwhm")
        throw ConfigError(w + ": unknown splice_artifact key '" + key + "'");
    if (s.contains("center")) art.center = WavelengthNm(number(s["center"], "center", w));
    if (s.contains("relative_amplitude"))
      art.relative_amplitude = number(s["relative_amplitude"], "relative_amplitude", w);
    if (s.contains("fwhm")) art.fwhm_nm = number(s["fwhm"], "fwhm", w);
    cfg.splice_artifact = art;
  }
  cfg.validate();
  return cfg;
}

instrument::InstrumentConfig load_instrument(const std::filesystem::path& path) {
  std::string text;
  try {
    text = tables::read_file(path);
  } catch (const Error&) {
    throw ConfigError("cannot read instrument config " + path.string());
  }
  return parse_instrument(text, path.string());
}

std::string instrument_to_json(const instrument::InstrumentConfig& cfg) {
  ordered_json j;
  j["name"] = cfg.name;
  j["gdd_D"] = cfg.gdd_ps_per_nm;
  j["lambda0"] = cfg.lambda0.value;
  j["delta_tau"] = cfg.delta_tau_ps;
  j["window"] = {cfg.window_min_nm, cfg.window_max_nm};
  j["reflectivity_R"] = cfg.reflectivity;
  if (is_flat_window(cfg.efficiency, cfg.window_min_nm, cfg.window_max_nm)) {
    j["efficiency_curve"] = {{"model", "flat_window"}, {"total_H", cfg.efficiency.total_h()}};
  } else {
    j["efficiency_curve"] = {
        {"grid", cfg.efficiency.grid()}, {"eta", cfg.efficiency.eta()}, {"total_H", cfg.efficiency.total_h()}};
  }
  j["jitter_fwhm"] = cfg.jitter_fwhm_ps;
  j["dark_rate"] = cfg.dark_rate_hz;
  j["dead_time"] = cfg.dead_time_ps;
  j["clock_period"] = cfg.clock_period_ps;
  j["histogram_bin"] = cfg.histogram_bin_ps;
  j["tdc_quantum"] = cfg.tdc_quantum_ps;
  if (cfg.splice_artifact) {
    j["splice_artifact"] = {{"center", cfg.splice_artifact->center.value},
                            {"relative_amplitude", cfg.splice_artifact->relative_amplitude},
                            {"fwhm", cfg.splice_artifact->fwhm_nm}};
  } else {
    j["splice_artifact"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> preset_dirs(const std::filesystem::path& extra) {
  std::vector<std::filesystem::path> dirs;
  if (!extra.empty()) dirs.push_back(extra);
  if (const char* env = std::getenv("TOFSPEC_PRESET_DIR"); env && *env) dirs.emplace_back(env);
  if (*TOFSPEC_PRESET_DIR) dirs.emplace_back(TOFSPEC_PRESET_DIR);
  return dirs;
}

instrument::InstrumentConfig find_preset(const std::string& name, const std::filesystem::path& extra_dir) {
  const std::string file = lower(name) + ".json";
  std::string searched;
  for (const auto& dir : preset_dirs(extra_dir)) {
    const auto path = dir / file;
    if (std::filesystem::is_regular_file(path)) return load_instrument(path);
    searched += (searched.empty() ? "" : ", ") + dir.string();
  }
  throw ConfigError("unknown preset '" + name + "' (searched: " + (searched.empty() ? "nothing" : searched) + ")");
}

namespace {

using Params = std::map<std::string, std::string>;

double parse_number(std::string text, const std::string& key) {
  for (const char* suffix : {"nm", "ps", "rad"}) {
    const std::string s(suffix);
    if (text.size() > s.size() && text.compare(text.size() - s.size(), s.size(), s) == 0) {
      text.resize(text.size() - s.size());
      break;
    }
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("source: bad value '" + text + "' for '" + key + "'");
  return v;
}

Params split_params(std::string_view body, const std::string& kind) {
  Params p;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto end = body.find(',', pos);
    if (end == std::string_view::npos) end = body.size();
    const auto item = body.substr(pos, end - pos);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw ConfigError("source " + kind + ": expected key=value, got '" + std::string(item) + "'");
    p[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    pos = end + 1;
  }
  return p;
}

class ParamReader {
 public:
  ParamReader(Params p, std::string kind) : p_(std::move(p)), kind_(std::move(kind)) {}
  double get(const std::string& key, double fallback) {
    used_.insert(key);
    const auto it = p_.find(key);
    return it == p_.end() ? fallback : parse_number(it->second, key);
  }
  void finish() const {
    for (const auto& [key, _] : p_)
      if (!used_.count(key)) throw ConfigError("source " + kind_ + ": unknown parameter '" + key + "'");
  }

 private:
  Params p_;
  std::string kind_;
  std::set<std::string> used_;
};

}  // namespace

spectral::SpectralSource parse_source(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string kind = lower(std::string(spec.substr(0, colon)));
  const std::string_view body = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  spectral::SpectralSource source;
  if (kind == "tabulated") {
    std::string path(body);
    if (path.rfind("path=", 0) == 0) path = path.substr(5);
    if (path.empty()) throw ConfigError("source tabulated: missing path");
    if (!std::filesystem::exists(path)) throw ConfigError("source tabulated: no such file " + path);
    source = spectral::load_tabulated(path);
  } else {
    ParamReader r(split_params(body, kind), kind);
    if (kind == "gaussian") {
      source = spectral::GaussianLine{WavelengthNm(r.get("center", 830.0)), r.get("fwhm", 2.0)};
    } else if (kind == "mono") {
      source = spectral::GaussianLine{WavelengthNm(r.get("center", 830.0)), kMonochromaticFwhmNm};
    } else if (kind == "doublepulse") {
      spectral::DoublePulse d;
      d.envelope = {WavelengthNm(r.get("center", 830.0)), r.get("fwhm", 2.0)};
      d.delay_ps = r.get("T", 11.0);
      d.visibility = r.get("V", 0.24);
      d.phase_rad = r.get("phase", 0.0);
      source = d;
    } else if (kind == "pair") {
      spectral::PairGaussian pg;
      const double center = r.get("center", 830.0);
      pg.signal = {WavelengthNm(r.get("signal_center", center)), r.get("signal", 2.0)};
      pg.idler = {WavelengthNm(r.get("idler_center", center)), r.get("idler", 8.0)};
      pg.correlation = r.get("rho", 0.0);
      source = pg;
    } else {
      throw ConfigError("unknown source kind '" + kind + "' (expected gaussian, mono, doublepulse, pair, tabulated)");
    }
    r.finish();
  }
  spectral::validate(source);
  return source;
}

}  // namespace tofspec::config
