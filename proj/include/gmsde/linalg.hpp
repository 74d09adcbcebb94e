#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace gmsde {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a covariance cannot be factorized even at the top of the
/// jitter ladder. `ladder` lists every absolute jitter that was tried.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what, std::vector<double> ladder)
      : std::runtime_error(what + " (jitter ladder tried: " + describe(ladder) + ")"),
        ladder_(std::move(ladder)) {}

  const std::vector<double>& ladder() const { return ladder_; }

 private:
  static std::string describe(const std::vector<double>& ladder);
  std::vector<double> ladder_;
};

struct JitterLadder {
  double first = 1e-8;  // relative to mean(diag)
  double last = 1e-4;
  double factor = 10.0;
  bool try_without = true;
};

/// Cholesky factor of `A + jitter * I`, escalating jitter until the
/// factorization succeeds. A matrix whose diagonal is identically zero is
/// treated as the zero covariance and yields L = 0.
struct RobustCholesky {
  MatrixXd L;
  double jitter = 0.0;

  /// Solves (A + jitter I) X = B.
  MatrixXd solve(const MatrixXd& B) const;
  VectorXd solve(const VectorXd& b) const;
  double log_det() const;

  bool zero = false;
};

RobustCholesky robust_cholesky(const MatrixXd& A, const std::string& label,
                               double base_jitter = 0.0, const JitterLadder& ladder = {});

inline MatrixXd symmetrize(const MatrixXd& A) { return 0.5 * (A + A.transpose()); }

/// Kronecker product A ⊗ B.
MatrixXd kron(const MatrixXd& A, const MatrixXd& B);

/// Block-diagonal matrix from equally sized square blocks.
MatrixXd block_diag(const std::vector<MatrixXd>& blocks);

}  // namespace gmsde
