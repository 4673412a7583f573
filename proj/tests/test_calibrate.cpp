#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "tofspec/calibrate.hpp"
#include "tofspec/config_io.hpp"
#include "tofspec/error.hpp"

using namespace tofspec;
using namespace tofspec::calibrate;
using testsupport::Gen;

namespace {

std::vector<DelayPoint> line_points(double slope, double intercept, double noise, std::uint64_t seed, int n = 11) {
  RandomStream rng(seed);
  std::vector<DelayPoint> pts;
  for (int i = 0; i < n; ++i) {
    const double l = 825.0 + 10.0 * i / (n - 1);
    pts.push_back({l, intercept + slope * (l - 830.0) + noise * rng.normal(), std::nullopt});
  }
  return pts;
}

timetag::Histogram histogram(std::vector<std::uint64_t> counts, double width, double origin) {
  timetag::Histogram h;
  h.counts = std::move(counts);
  h.bin_width_ps = width;
  h.origin_ps = origin;
  return h;
}

spectral::TabulatedSpectrum tabulate(const spectral::SpectralSource& s, double lo, double hi, double step) {
  std::vector<double> g;
  std::vector<double> d;
  for (double x = lo; x <= hi + 1e-9; x += step) {
    g.push_back(x);
    d.push_back(spectral::eval_density(s, WavelengthNm(x)));
  }
  return {g, d};
}

instrument::RunOptions run(std::uint64_t cycles, std::uint64_t seed) {
  instrument::RunOptions o;
  o.n_cycles = cycles;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_SUITE("calibrate") {

TEST_CASE("noiseless line is fitted exactly") {
  const auto pts = line_points(938, 6000, 0, 1);
  const auto fit = fit_gdd(pts, 1, WavelengthNm(830));
  CHECK(fit.gdd_ps_per_nm == doctest::Approx(938).epsilon(1e-12));
  CHECK(fit.intercept_ps == doctest::Approx(6000).epsilon(1e-12));
  CHECK(fit.residual_rms_ps < 1e-9);
}

TEST_CASE("two points interpolate exactly") {
  const std::vector<DelayPoint> pts{{826, -3000, std::nullopt}, {834, 4660, std::nullopt}};
  const auto fit = fit_gdd(pts, 1, WavelengthNm(830));
  CHECK(fit.gdd_ps_per_nm == doctest::Approx(957.5).epsilon(1e-12));
  CHECK(fit.residual_rms_ps < 1e-9);
  CHECK(fit.sigma_gdd == 0.0);
}

TEST_CASE("noisy delay scans recover the slope") {
  double mean = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fit = fit_gdd(line_points(958, 0, 5, seed), 1, WavelengthNm(830));
    CHECK(std::abs(fit.gdd_ps_per_nm - 958) < 0.005 * 958);
    mean += fit.gdd_ps_per_nm / 100;
  }
  CHECK(std::abs(mean - 958) < 0.005 * 958);
}

TEST_CASE("unweighted fit matches closed-form least squares") {
  Gen g(10);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<DelayPoint> pts;
    std::vector<double> x;
    std::vector<double> y;
    const auto n = static_cast<int>(g.integer(3, 30));
    for (int i = 0; i < n; ++i) {
      const double l = g.uniform(820, 840);
      const double d = g.uniform(-1e4, 1e4);
      pts.push_back({l, d, std::nullopt});
      x.push_back(l - 830);
      y.push_back(d);
    }
    const auto fit = fit_gdd(pts, 1, WavelengthNm(830));
    const auto o = oracle::ols(x, y);
    REQUIRE(fit.gdd_ps_per_nm == doctest::Approx(o.slope).epsilon(1e-9).scale(1e3));
    REQUIRE(fit.intercept_ps == doctest::Approx(o.intercept).epsilon(1e-9).scale(1e3));
  }
}

TEST_CASE("weights follow the supplied uncertainties") {
  // Duplicating a point is equivalent to halving its variance.
  std::vector<DelayPoint> dup{{826, 100, std::nullopt}, {828, 310, std::nullopt}, {828, 310, std::nullopt},
                              {833, 800, std::nullopt}};
  std::vector<DelayPoint> weighted{{826, 100, 1.0}, {828, 310, 1.0 / std::sqrt(2.0)}, {833, 800, 1.0}};
  const auto a = fit_gdd(dup, 1, WavelengthNm(830));
  const auto b = fit_gdd(weighted, 1, WavelengthNm(830));
  CHECK(a.gdd_ps_per_nm == doctest::Approx(b.gdd_ps_per_nm).epsilon(1e-12));
  CHECK(a.intercept_ps == doctest::Approx(b.intercept_ps).epsilon(1e-12));
  CHECK(b.sigma_gdd > 0.0);
}

TEST_CASE("fit is scale equivariant") {
  Gen g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = line_points(g.uniform(100, 2000), g.uniform(-5000, 5000), g.uniform(0, 20), trial);
    const double k = g.uniform(-10, 10);
    auto scaled = pts;
    for (auto& p : scaled) p.delay_ps *= k;
    const auto a = fit_gdd(pts, 1, WavelengthNm(830));
    const auto b = fit_gdd(scaled, 1, WavelengthNm(830));
    REQUIRE(b.gdd_ps_per_nm == doctest::Approx(k * a.gdd_ps_per_nm).epsilon(1e-12));
  }
}

TEST_CASE("quadratic diagnostic") {
  std::vector<DelayPoint> pts;
  for (int i = 0; i < 11; ++i) {
    const double x = -5.0 + i;
    pts.push_back({830 + x, 938 * x + 1.5 * x * x, std::nullopt});
  }
  const auto fit = fit_gdd(pts, 2, WavelengthNm(830));
  CHECK(fit.quadratic_ps_per_nm2 == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(fit.gdd_ps_per_nm == doctest::Approx(938).epsilon(1e-12));
  const auto lin = fit_gdd(line_points(938, 0, 0, 1), 2, WavelengthNm(830));
  CHECK(std::abs(lin.quadratic_ps_per_nm2) < 1e-9);
}

TEST_CASE("degenerate delay scans") {
  const std::vector<DelayPoint> same{{830, 1, std::nullopt}, {830, 2, std::nullopt}, {830, 3, std::nullopt}};
  CHECK_THROWS_AS(fit_gdd(same, 1, WavelengthNm(830)), CalibrationError);
  const std::vector<DelayPoint> one{{830, 1, std::nullopt}};
  CHECK_THROWS_AS(fit_gdd(one, 1, WavelengthNm(830)), CalibrationError);
  CHECK_THROWS_AS(fit_gdd(line_points(938, 0, 0, 1), 3, WavelengthNm(830)), ConfigError);
  const std::vector<DelayPoint> bad_sigma{{826, 1, 0.0}, {828, 2, 1.0}};
  CHECK_THROWS_AS(fit_gdd(bad_sigma, 1, WavelengthNm(830)), CalibrationError);
}

TEST_CASE("spike at the mapped reference gives zero offset") {
  // bin 148 is centred on 4750 ps
  std::vector<std::uint64_t> counts(300, 0);
  counts[148] = 500;
  const auto h = histogram(counts, 32, 4750 - 148.5 * 32);
  const auto off = find_offset(h, WavelengthNm(835), 950, WavelengthNm(830));
  CHECK(std::abs(off.delta_tau_ps) < 1e-6);
}

TEST_CASE("peak straddling two bins sits on their boundary") {
  std::vector<std::uint64_t> counts(100, 3);
  counts[40] = 1000;
  counts[41] = 1000;
  const auto h = histogram(counts, 32, 0);
  const auto off = find_offset(h, WavelengthNm(830), 950, WavelengthNm(830));
  CHECK(std::abs(off.peak_time_ps - 41 * 32.0) <= 8.0);
}

TEST_CASE("offset is translation equivariant") {
  Gen g(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint64_t> counts(200, 0);
    const double mu = g.uniform(40, 160);
    const double s = g.uniform(0.3, 4);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double z = (static_cast<double>(i) + 0.5 - mu) / s;
      counts[i] = static_cast<std::uint64_t>(std::round(1000 * std::exp(-0.5 * z * z) + g.uniform(0, 30)));
    }
    const auto h = histogram(counts, 32, 0);
    const double delta = g.uniform(-1e5, 1e5);
    const auto moved = histogram(counts, 32, delta);
    const auto a = find_offset(h, WavelengthNm(831), 938, WavelengthNm(830));
    const auto b = find_offset(moved, WavelengthNm(831), 938, WavelengthNm(830));
    REQUIRE(b.delta_tau_ps - a.delta_tau_ps == doctest::Approx(delta).epsilon(1e-9));
  }
}

TEST_CASE("no calibration peak") {
  CHECK_THROWS_AS(find_offset(histogram(std::vector<std::uint64_t>(50, 0), 32, 0), WavelengthNm(830), 950,
                              WavelengthNm(830)),
                  CalibrationError);
  CHECK_THROWS_AS(find_offset(histogram(std::vector<std::uint64_t>(50, 7), 32, 0), WavelengthNm(830), 950,
                              WavelengthNm(830)),
                  CalibrationError);
  std::vector<std::uint64_t> weak(50, 10);
  weak[20] = 20;
  CHECK_THROWS_AS(find_offset(histogram(weak, 32, 0), WavelengthNm(830), 950, WavelengthNm(830)), CalibrationError);
}

TEST_CASE("narrowband run recovers the configured offset") {
  instrument::InstrumentConfig cfg;
  cfg.gdd_ps_per_nm = 938;
  cfg.delta_tau_ps = 1234;
  cfg.efficiency = instrument::EfficiencyCurve::flat_window(825, 835, 1.0);
  const spectral::SpectralSource filter = spectral::GaussianLine{WavelengthNm(830), 1.0};
  const auto sim = instrument::simulate_run(filter, 1.0, cfg, run(1000000, 42));
  const auto h = timetag::build_histogram(sim.stream, testsupport::cycle_spec(sim.stream, 32));
  const auto off = find_offset(h, WavelengthNm(830), 938, WavelengthNm(830));
  CHECK(std::abs(off.delta_tau_ps - 1234) <= 16.0);
}

TEST_CASE("proportional counts give a flat efficiency") {
  const spectral::SpectralSource src = spectral::GaussianLine{WavelengthNm(830), 20.0};
  const auto ref = tabulate(src, 815, 845, 0.01);
  SpectrumTable counts;
  for (double l = 825; l <= 835; l += 0.05) {
    counts.lambda_nm.push_back(l);
    counts.values.push_back(12345.0 * ref(l));
  }
  const auto eta = estimate_efficiency(counts, ref, 0.1);
  CHECK(eta.integral() == doctest::Approx(0.1).epsilon(1e-9));
  const double level = 0.1 / (counts.lambda_nm.back() - counts.lambda_nm.front());
  for (double e : eta.eta()) REQUIRE(e == doctest::Approx(level).epsilon(1e-9));
}

TEST_CASE("efficiency integral equals H over unmasked points") {
  Gen g(13);
  for (int trial = 0; trial < 200; ++trial) {
    const double h = g.uniform(1e-4, 1);
    std::vector<double> rg;
    std::vector<double> rd;
    for (double l = 820; l <= 840; l += 0.1) {
      rg.push_back(l);
      rd.push_back(g.uniform(0, 1) < 0.1 ? 0.0 : g.uniform(0.001, 1));
    }
    const spectral::TabulatedSpectrum ref(rg, rd);
    SpectrumTable counts;
    for (double l = 822 + g.uniform(0, 0.1); l < 838; l += 0.034) {
      counts.lambda_nm.push_back(l);
      counts.values.push_back(std::floor(g.uniform(0, 500)));
    }
    const auto eta = estimate_efficiency(counts, ref, h);
    REQUIRE(eta.integral() == doctest::Approx(h).epsilon(1e-9));
  }
}

TEST_CASE("disjoint supports") {
  const auto ref = tabulate(spectral::GaussianLine{WavelengthNm(900), 2.0}, 895, 905, 0.01);
  SpectrumTable counts{{826, 827, 828}, {1, 2, 3}};
  CHECK_THROWS_AS(estimate_efficiency(counts, ref, 0.1), CalibrationError);
}

TEST_CASE("step-shaped efficiency is recovered") {
  // eta: level 1 on 826-830 nm, level 2 on 830-834 nm
  std::vector<double> g;
  std::vector<double> shape;
  for (double l = 820; l <= 840 + 1e-9; l += 0.001) {
    g.push_back(l);
    shape.push_back(l < 826 || l > 834 ? 0.0 : (l < 830 ? 1.0 : 2.0));
  }
  instrument::InstrumentConfig cfg;
  cfg.gdd_ps_per_nm = 938;
  const double h = 0.05;
  cfg.efficiency = instrument::EfficiencyCurve(g, shape, h);
  const spectral::SpectralSource src = spectral::GaussianLine{WavelengthNm(830), 20.0};
  const auto sim = instrument::simulate_run(src, 1.0, cfg, run(4000000, 7));
  const auto hist = timetag::build_histogram(sim.stream, testsupport::cycle_spec(sim.stream, 32));
  const auto ref = tabulate(src, 810, 850, 0.01);
  const auto counts = counts_vs_wavelength(hist, cfg.dispersion());
  const auto eta = estimate_efficiency(counts, ref, h);

  // Compare 0.5 nm averages away from the steps against the truth with the
  // Poisson error of the counts behind each average.
  int compared = 0;
  for (double lo = 826.25; lo < 833.5; lo += 0.5) {
    if (std::abs(lo - 829.75) < 0.3) continue;
    double sum_eta = 0;
    double n = 0;
    int k = 0;
    for (std::size_t i = 0; i < counts.lambda_nm.size(); ++i) {
      const double l = counts.lambda_nm[i];
      if (l < lo || l >= lo + 0.5) continue;
      sum_eta += eta(l);
      n += counts.values[i];
      ++k;
    }
    REQUIRE(k > 5);
    const double mean = sum_eta / k;
    const double truth = cfg.efficiency(lo + 0.25);
    CHECK(std::abs(mean - truth) < 3.0 * truth / std::sqrt(n));
    ++compared;
  }
  CHECK(compared >= 12);
}

TEST_CASE("preset efficiency vanishes outside the reflection window") {
  const auto cfg = config::find_preset("TRSPS1");
  const spectral::SpectralSource src = spectral::GaussianLine{WavelengthNm(830), 30.0};
  const auto sim = instrument::simulate_run(src, 1.0, cfg, run(3000000, 17));
  const auto hist = timetag::build_histogram(sim.stream, testsupport::cycle_spec(sim.stream, cfg.histogram_bin_ps));
  const auto ref = tabulate(src, 780, 880, 0.01);
  const auto eta = estimate_efficiency(counts_vs_wavelength(hist, cfg.dispersion()), ref, cfg.efficiency.total_h());
  double inside = 0;
  int n_inside = 0;
  double outside_max = 0;
  for (std::size_t i = 0; i < eta.grid().size(); ++i) {
    const double l = eta.grid()[i];
    if (l > 825.5 && l < 834.5) {
      inside += eta.eta()[i];
      ++n_inside;
    }
    if (l < 824.8 || l > 835.2) outside_max = std::max(outside_max, eta.eta()[i]);
  }
  CHECK(n_inside > 200);
  CHECK(outside_max < 0.02 * inside / n_inside);
}

TEST_CASE("calibration file round trip") {
  CalibrationResult c;
  c.map = {938.25, WavelengthNm(830), 6001.5};
  c.intercept_ps = -12.25;
  c.fit_degree = 2;
  c.quadratic_ps_per_nm2 = 0.125;
  c.fit_residual_rms_ps = 4.5;
  c.sigma_gdd = 0.5;
  c.sigma_delta_tau = 2.0;
  c.jitter_fwhm_ps = 52;
  c.histogram_bin_ps = 32;
  c.efficiency = instrument::EfficiencyCurve({825, 826.5, 835}, {0.1, 0.3, 0.2}, 0.01);
  std::stringstream ss;
  write_calibration(ss, c);
  const auto text = ss.str();
  const auto back = read_calibration(ss);
  CHECK(back.map.gdd_ps_per_nm == c.map.gdd_ps_per_nm);
  CHECK(back.map.delta_tau_ps == c.map.delta_tau_ps);
  CHECK(back.intercept_ps == c.intercept_ps);
  CHECK(back.quadratic_ps_per_nm2 == c.quadratic_ps_per_nm2);
  CHECK(back.fit_degree == 2);
  CHECK(back.jitter_fwhm_ps == 52);
  CHECK(back.histogram_bin_ps == 32);
  CHECK(back.efficiency == c.efficiency);
  std::stringstream again;
  write_calibration(again, back);
  CHECK(again.str() == text);

  std::string with_key = text;
  with_key.insert(with_key.find("format_version"), "colour = 3\n");
  std::istringstream bad(with_key);
  CHECK_THROWS_AS(read_calibration(bad), FormatError);
  std::string short_table = text.substr(0, text.rfind("835"));
  std::istringstream truncated(short_table);
  CHECK_THROWS_AS(read_calibration(truncated), FormatError);
}

TEST_CASE("delay point files") {
  testsupport::TempDir dir("calib");
  const auto pts = line_points(938, 0, 5, 3);
  write_delay_points(dir.path / "d.csv", pts);
  const auto back = read_delay_points(dir.path / "d.csv");
  REQUIRE(back.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(back[i].lambda_nm == pts[i].lambda_nm);
    CHECK(back[i].delay_ps == pts[i].delay_ps);
    CHECK(!back[i].sigma_ps);
  }
  auto with_sigma = pts;
  for (auto& p : with_sigma) p.sigma_ps = 5.0;
  write_delay_points(dir.path / "s.csv", with_sigma);
  CHECK(read_delay_points(dir.path / "s.csv").at(4).sigma_ps == 5.0);
}

}  // TEST_SUITE
