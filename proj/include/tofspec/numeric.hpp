#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace tofspec::numeric {

/// Piecewise-linear interpolation on a strictly increasing grid; zero outside.
double interp_linear(std::span<const double> x, std::span<const double> y, double xq);

/// Trapezoidal integral of tabulated y(x).
double trapezoid(std::span<const double> x, std::span<const double> y);

double normal_cdf(double z);

/// Weighted nonlinear least squares.
///
/// Minimizes sum_i ((model(x_i, p) - y_i) / sigma_i)^2 with a
/// Levenberg-Marquardt iteration and a central-difference Jacobian.
struct LeastSquaresProblem {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> sigma;  // empty means unit weights
  std::function<double(double, std::span<const double>)> model;
};

struct LeastSquaresResult {
  std::vector<double> params;
  std::vector<double> covariance;  // row-major, params.size()^2, unscaled (J^T W J)^-1
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;

  double param_sigma(std::size_t i) const;
  double reduced_chi2() const;
  std::size_t dof = 0;
};

struct LeastSquaresOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-12;
  double initial_damping = 1e-3;
};

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem,
                                       std::vector<double> initial,
                                       const LeastSquaresOptions& options = {});

}  // namespace tofspec::numeric
