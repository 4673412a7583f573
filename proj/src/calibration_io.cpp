#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tofspec/calibrate.hpp"
#include "tofspec/error.hpp"
#include "tofspec/tables.hpp"

namespace tofspec::calibrate {

namespace {

using tables::format_double;

double parse_value(const std::string& text, const std::string& key, const std::string& where) {
  std::istringstream is(text);
  is.imbue(std::locale::classic());
  double v = 0.0;
  is >> v;
  if (!is || !(is >> std::ws).eof()) throw FormatError(where + ": bad value for '" + key + "'", 0);
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_calibration(std::ostream& out, const CalibrationResult& c) {
  out << "# time-of-flight spectrometer calibration\n";
  out << "format_version = " << kCalibrationFormatVersion << '\n';
  out << "gdd_ps_per_nm = " << format_double(c.map.gdd_ps_per_nm) << '\n';
  out << "lambda0_nm = " << format_double(c.map.lambda0.value) << '\n';
  out << "delta_tau_ps = " << format_double(c.map.delta_tau_ps) << '\n';
  out << "intercept_ps = " << format_double(c.intercept_ps) << '\n';
  out << "quadratic_ps_per_nm2 = " << format_double(c.quadratic_ps_per_nm2) << '\n';
  out << "fit_degree = " << c.fit_degree << '\n';
  out << "fit_residual_rms_ps = " << format_double(c.fit_residual_rms_ps) << '\n';
  out << "sigma_gdd_ps_per_nm = " << format_double(c.sigma_gdd) << '\n';
  out << "sigma_delta_tau_ps = " << format_double(c.sigma_delta_tau) << '\n';
  out << "jitter_fwhm_ps = " << format_double(c.jitter_fwhm_ps) << '\n';
  out << "histogram_bin_ps = " << format_double(c.histogram_bin_ps) << '\n';
  out << "total_h = " << format_double(c.efficiency.total_h()) << '\n';
  out << "efficiency_points = " << c.efficiency.grid().size() << '\n';
  out << "[efficiency]\n";
  for (std::size_t i = 0; i < c.efficiency.grid().size(); ++i)
    out << format_double(c.efficiency.grid()[i]) << ' ' << format_double(c.efficiency.eta()[i]) << '\n';
}

void write_calibration(const std::filesystem::path& path, const CalibrationResult& calib) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write calibration file " + path.string());
  write_calibration(out, calib);
  if (!out) throw Error("write failed: " + path.string());
}

CalibrationResult read_calibration(std::istream& in, const std::string& source_name) {
  std::map<std::string, double> kv;
  std::string line;
  std::size_t line_no = 0;
  bool in_table = false;
  std::vector<double> grid;
  std::vector<double> eta;
  static const std::set<std::string> known{
      "format_version",      "gdd_ps_per_nm",       "lambda0_nm",         "delta_tau_ps",
      "intercept_ps",        "quadratic_ps_per_nm2", "fit_degree",         "fit_residual_rms_ps",
      "sigma_gdd_ps_per_nm", "sigma_delta_tau_ps",  "jitter_fwhm_ps",     "total_h",             "histogram_bin_ps",
      "efficiency_points"};
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = source_name + ":" + std::to_string(line_no);
    std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    if (body == "[efficiency]") {
      in_table = true;
      continue;
    }
    if (!in_table) {
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw FormatError(where + ": expected key = value", line_no);
      const std::string key = trim(body.substr(0, eq));
      if (!known.count(key)) throw FormatError(where + ": unknown key '" + key + "'", line_no);
      kv[key] = parse_value(trim(body.substr(eq + 1)), key, where);
      continue;
    }
    std::istringstream is(body);
    is.imbue(std::locale::classic());
    double l = 0.0;
    double e = 0.0;
    if (!(is >> l >> e)) throw FormatError(where + ": expected 'lambda_nm eta'", line_no);
    grid.push_back(l);
    eta.push_back(e);
  }
  auto need = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(source_name + ": missing key '" + std::string(key) + "'", 0);
    return it->second;
  };
  if (static_cast<int>(need("format_version")) != kCalibrationFormatVersion)
    throw FormatError(source_name + ": unsupported calibration format version", 0);
  if (static_cast<std::size_t>(need("efficiency_points")) != grid.size())
    throw FormatError(source_name + ": efficiency table has " + std::to_string(grid.size()) + " rows, header says " +
                          std::to_string(static_cast<std::size_t>(need("efficiency_points"))),
                      grid.size());

  CalibrationResult c;
  c.map.gdd_ps_per_nm = need("gdd_ps_per_nm");
  c.map.lambda0 = WavelengthNm(need("lambda0_nm"));
  c.map.delta_tau_ps = need("delta_tau_ps");
  c.intercept_ps = kv.count("intercept_ps") ? kv["intercept_ps"] : 0.0;
  c.quadratic_ps_per_nm2 = kv.count("quadratic_ps_per_nm2") ? kv["quadratic_ps_per_nm2"] : 0.0;
  c.fit_degree = kv.count("fit_degree") ? static_cast<int>(kv["fit_degree"]) : 1;
  c.fit_residual_rms_ps = kv.count("fit_residual_rms_ps") ? kv["fit_residual_rms_ps"] : 0.0;
  c.sigma_gdd = kv.count("sigma_gdd_ps_per_nm") ? kv["sigma_gdd_ps_per_nm"] : 0.0;
  c.sigma_delta_tau = kv.count("sigma_delta_tau_ps") ? kv["sigma_delta_tau_ps"] : 0.0;
  c.jitter_fwhm_ps = kv.count("jitter_fwhm_ps") ? kv["jitter_fwhm_ps"] : 0.0;
  c.histogram_bin_ps = kv.count("histogram_bin_ps") ? kv["histogram_bin_ps"] : 0.0;
  if (c.map.gdd_ps_per_nm == 0.0) throw FormatError(source_name + ": gdd_ps_per_nm is zero", 0);
  try {
    c.efficiency = instrument::EfficiencyCurve::from_normalized(std::move(grid), std::move(eta), need("total_h"));
  } catch (const ConfigError& e) {
    throw FormatError(source_name + ": " + e.what(), 0);
  }
  return c;
}

CalibrationResult read_calibration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open calibration file " + path.string());
  return read_calibration(in, path.string());
}

std::vector<DelayPoint> read_delay_points(const std::filesystem::path& path) {
  const auto table = tables::read_numeric_table(path, 2);
  std::vector<DelayPoint> points;
  for (const auto& row : table.rows) {
    DelayPoint p{row[0], row[1], std::nullopt};
    if (row.size() >= 3) p.sigma_ps = row[2];
    points.push_back(p);
  }
  return points;
}

void write_delay_points(const std::filesystem::path& path, std::span<const DelayPoint> points) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  const bool with_sigma =
      !points.empty() && std::all_of(points.begin(), points.end(), [](const DelayPoint& p) { return p.sigma_ps.has_value(); });
  out << (with_sigma ? "lambda_nm,delay_ps,sigma_ps\n" : "lambda_nm,delay_ps\n");
  for (const auto& p : points) {
    out << format_double(p.lambda_nm) << ',' << format_double(p.delay_ps);
    if (with_sigma) out << ',' << format_double(*p.sigma_ps);
    out << '\n';
  }
}

}  // namespace tofspec::calibrate
