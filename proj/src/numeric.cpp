#include "tofspec/numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tofspec::numeric {

double interp_linear(std::span<const double> x, std::span<const double> y, double xq) {
  if (x.empty() || xq < x.front() || xq > x.back()) return 0.0;
  if (x.size() == 1) return y.front();
  auto it = std::upper_bound(x.begin(), x.end(), xq);
  if (it == x.end()) return y.back();
  const std::size_t hi = static_cast<std::size_t>(it - x.begin());
  const std::size_t lo = hi - 1;
  const double t = (xq - x[lo]) / (x[hi] - x[lo]);
  return y[lo] + t * (y[hi] - y[lo]);
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  double sum = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) sum += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return sum;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double LeastSquaresResult::param_sigma(std::size_t i) const {
  const std::size_t n = params.size();
  if (i >= n || covariance.size() != n * n) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(std::max(0.0, covariance[i * n + i]));
}

double LeastSquaresResult::reduced_chi2() const {
  return dof > 0 ? chi2 / static_cast<double>(dof) : std::numeric_limits<double>::quiet_NaN();
}

namespace {

struct Evaluation {
  Eigen::VectorXd residual;  // weighted
  double chi2 = 0.0;
};

Evaluation evaluate(const LeastSquaresProblem& pb, std::span<const double> p) {
  const std::size_t n = pb.x.size();
  Evaluation ev;
  ev.residual.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double w = pb.sigma.empty() ? 1.0 : 1.0 / pb.sigma[i];
    const double r = (pb.model(pb.x[i], p) - pb.y[i]) * w;
    ev.residual[static_cast<Eigen::Index>(i)] = r;
  }
  ev.chi2 = ev.residual.squaredNorm();
  return ev;
}

Eigen::MatrixXd jacobian(const LeastSquaresProblem& pb, std::vector<double> p) {
  const auto n = static_cast<Eigen::Index>(pb.x.size());
  const auto m = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd jac(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double p0 = p[static_cast<std::size_t>(j)];
    const double h = 1e-6 * std::max(std::abs(p0), 1e-3);
    p[static_cast<std::size_t>(j)] = p0 + h;
    const Evaluation up = evaluate(pb, p);
    p[static_cast<std::size_t>(j)] = p0 - h;
    const Evaluation dn = evaluate(pb, p);
    p[static_cast<std::size_t>(j)] = p0;
    jac.col(j) = (up.residual - dn.residual) / (2.0 * h);
  }
  return jac;
}

}  // namespace

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem,
                                       std::vector<double> initial,
                                       const LeastSquaresOptions& options) {
  if (problem.x.size() != problem.y.size() ||
      (!problem.sigma.empty() && problem.sigma.size() != problem.x.size())) {
    throw std::invalid_argument("levenberg_marquardt: mismatched data lengths");
  }
  LeastSquaresResult out;
  out.params = std::move(initial);
  const std::size_t m = out.params.size();
  out.dof = problem.x.size() > m ? problem.x.size() - m : 0;

  Evaluation current = evaluate(problem, out.params);
  if (!std::isfinite(current.chi2)) return out;
  double lambda = options.initial_damping;

  Eigen::MatrixXd jac;
  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    jac = jacobian(problem, out.params);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * current.residual;

    bool accepted = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < a.rows(); ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-30);
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> trial = out.params;
      for (std::size_t k = 0; k < m; ++k) trial[k] += step[static_cast<Eigen::Index>(k)];
      const Evaluation ev = evaluate(problem, trial);
      if (std::isfinite(ev.chi2) && ev.chi2 <= current.chi2) {
        const double improvement = current.chi2 - ev.chi2;
        // Per-parameter test: a shared norm lets a large amplitude hide
        // unconverged small parameters.
        bool small_step = true;
        for (std::size_t k = 0; k < m; ++k) {
          const double tol = options.relative_tolerance * (std::abs(trial[k]) + options.relative_tolerance);
          if (std::abs(step[static_cast<Eigen::Index>(k)]) > tol) small_step = false;
        }
        out.params = std::move(trial);
        current = ev;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (improvement <= options.relative_tolerance * std::max(current.chi2, 1e-300) || small_step) {
          out.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No downhill step at any damping: we sit at a (numerical) minimum.
      out.converged = current.chi2 < std::numeric_limits<double>::infinity();
      break;
    }
    if (out.converged) break;
  }

  out.chi2 = current.chi2;
  jac = jacobian(problem, out.params);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  if (lu.isInvertible()) {
    const Eigen::MatrixXd cov = lu.inverse();
    out.covariance.resize(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        out.covariance[i * m + j] = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  } else {
    out.converged = false;
  }
  return out;
}

}  // namespace tofspec::numeric
