#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace testing {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest entrywise relative error, scaled by the largest magnitude in either vector.
inline double rel_err(const VectorXd& a, const VectorXd& b, double floor = 1e-8) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline VectorXd central_diff(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                             double h = 1e-6) {
  VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Jacobian of a vector function, rows = outputs.
inline MatrixXd central_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x,
                                 double h = 1e-6) {
  const VectorXd f0 = f(x);
  MatrixXd J(f0.size(), x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

inline MatrixXd random_matrix(Index r, Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Sample covariance of the rows of X (unbiased).
inline MatrixXd sample_cov(const MatrixXd& X) {
  const VectorXd mean = X.colwise().mean().transpose();
  const MatrixXd c = X.rowwise() - mean.transpose();
  return c.transpose() * c / static_cast<double>(X.rows() - 1);
}

/// Largest |empirical - expected| / standard error over all entries, where the
/// standard error of a Gaussian sample covariance is sqrt((S_ii S_jj + S_ij^2) / n).
inline double cov_z_score(const MatrixXd& empirical, const MatrixXd& expected, Index n) {
  double worst = 0.0;
  for (Index i = 0; i < expected.rows(); ++i)
    for (Index j = 0; j < expected.cols(); ++j) {
      const double se = std::sqrt((expected(i, i) * expected(j, j) + expected(i, j) * expected(i, j)) /
                                  static_cast<double>(n));
      if (se > 0.0) worst = std::max(worst, std::abs(empirical(i, j) - expected(i, j)) / se);
      else worst = std::max(worst, std::abs(empirical(i, j)) > 1e-12 ? 1e9 : 0.0);
    }
  return worst;
}

}  // namespace testing
