#pragma once

// Reference computations used to check the library. They are deliberately
// naive (brute force, closed forms) and share no code with src/.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

struct Tag {
  std::uint64_t t;
  int channel;
};

struct BruteHistogram {
  std::vector<std::uint64_t> counts;
  std::uint64_t no_trigger = 0;
  std::uint64_t out_of_range = 0;
};

// For every stop tag, scan backwards through the stream for the closest
// earlier trigger entry.
inline BruteHistogram brute_histogram(const std::vector<Tag>& tags, int stop, int trigger, double width,
                                      double origin, std::size_t n_bins) {
  BruteHistogram h;
  h.counts.assign(n_bins, 0);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].channel != stop) continue;
    std::size_t j = i;
    bool found = false;
    while (j > 0) {
      --j;
      if (tags[j].channel == trigger) {
        found = true;
        break;
      }
    }
    if (!found) {
      ++h.no_trigger;
      continue;
    }
    const double tau = static_cast<double>(tags[i].t) - static_cast<double>(tags[j].t);
    const double k = std::floor((tau - origin) / width);
    if (k < 0 || k >= static_cast<double>(n_bins)) {
      ++h.out_of_range;
      continue;
    }
    ++h.counts[static_cast<std::size_t>(k)];
  }
  return h;
}

// Pairs by trigger cycle: earliest tag of each channel after each trigger.
inline std::vector<std::pair<std::int64_t, std::int64_t>> brute_pairs(const std::vector<Tag>& tags, int a, int b,
                                                                     int trigger) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].channel != trigger) continue;
    std::int64_t ta = -1;
    std::int64_t tb = -1;
    for (std::size_t j = i + 1; j < tags.size() && tags[j].channel != trigger; ++j) {
      const auto d = static_cast<std::int64_t>(tags[j].t - tags[i].t);
      if (tags[j].channel == a && ta < 0) ta = d;
      if (tags[j].channel == b && tb < 0) tb = d;
    }
    if (ta >= 0 && tb >= 0) out.emplace_back(ta, tb);
  }
  return out;
}

struct Line {
  double slope;
  double intercept;
};

// Ordinary least squares via the textbook sums.
inline Line ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope, (sy - slope * sx) / n};
}

// Solves a 3x3 system by Cramer's rule.
inline std::vector<double> solve3(const double m[3][3], const double r[3]) {
  auto det = [](const double a[3][3]) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  };
  const double d = det(m);
  std::vector<double> out(3);
  for (int c = 0; c < 3; ++c) {
    double t[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t[i][j] = j == c ? r[i] : m[i][j];
    out[c] = det(t) / d;
  }
  return out;
}

struct GaussianEstimate {
  double center;
  double sigma;
};

// Gaussian through a histogram by a count-weighted parabola fit to log(counts)
// over bins holding at least `min_fraction` of the peak.
inline GaussianEstimate log_parabola_fit(const std::vector<double>& x, const std::vector<double>& counts,
                                         double min_fraction = 0.1) {
  const double peak = *std::max_element(counts.begin(), counts.end());
  // centre on the peak bin, raw wavelengths squared swamp the fit
  const double x0 = x[static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin())];
  double m[3][3] = {};
  double r[3] = {};
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (counts[i] < min_fraction * peak || counts[i] <= 0) continue;
    const double w = counts[i];
    const double u = x[i] - x0;
    const double p[3] = {1.0, u, u * u};
    const double ly = std::log(counts[i]);
    for (int a = 0; a < 3; ++a) {
      r[a] += w * p[a] * ly;
      for (int b = 0; b < 3; ++b) m[a][b] += w * p[a] * p[b];
    }
  }
  const auto c = solve3(m, r);
  const double sigma = std::sqrt(-1.0 / (2.0 * c[2]));
  return {x0 - c[1] / (2.0 * c[2]), sigma};
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double variance(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// |sum y_k exp(-2 pi i f x_k)| evaluated directly, mean removed.
inline double dft_magnitude(const std::vector<double>& x, const std::vector<double>& y, double frequency) {
  double mean = 0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  std::complex<double> s = 0;
  for (std::size_t k = 0; k < x.size(); ++k)
    s += (y[k] - mean) * std::polar(1.0, -2.0 * std::numbers::pi * frequency * x[k]);
  return std::abs(s);
}

// Period of the strongest DFT component between the two period bounds.
inline double dominant_period(const std::vector<double>& x, const std::vector<double>& y, double p_min, double p_max,
                              int steps = 4000) {
  double best_f = 0;
  double best = -1;
  for (int i = 0; i <= steps; ++i) {
    const double f = 1.0 / p_max + (1.0 / p_min - 1.0 / p_max) * i / steps;
    const double mag = dft_magnitude(x, y, f);
    if (mag > best) {
      best = mag;
      best_f = f;
    }
  }
  return 1.0 / best_f;
}

// Two-sided Kolmogorov-Smirnov distance of sorted samples from a CDF.
template <class Cdf>
double ks_statistic(std::vector<double> samples, Cdf cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline double gauss_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

// Expected counts in [lo, hi) for `n` events drawn from N(mu, sigma).
inline double gaussian_bin_expectation(double n, double lo, double hi, double mu, double sigma) {
  return n * (gauss_cdf(hi, mu, sigma) - gauss_cdf(lo, mu, sigma));
}

inline double fwhm_factor() { return 2.0 * std::sqrt(2.0 * std::log(2.0)); }

inline double quadrature(double a, double b) { return std::sqrt(a * a + b * b); }

// c in nm/ps written out independently of the library constant.
inline double fringe_period_nm(double delay_ps, double lambda_nm) {
  const double c_m_per_s = 299792458.0;
  const double c_nm_per_ps = c_m_per_s * 1e9 / 1e12;
  return lambda_nm * lambda_nm / (c_nm_per_ps * delay_ps);
}

}  // namespace oracle
