#include "gmsde/linalg.hpp"

#include <cmath>
#include <sstream>

namespace gmsde {

std::string FactorizationError::describe(const std::vector<double>& ladder) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (i) os << ", ";
    os << ladder[i];
  }
  return os.str();
}

namespace {

bool try_llt(const MatrixXd& A, double jitter, MatrixXd& L) {
  MatrixXd work = A;
  work.diagonal().array() += jitter;
  Eigen::LLT<MatrixXd> llt(work);
  if (llt.info() != Eigen::Success) return false;
  L = llt.matrixL();
  return L.allFinite();
}

}  // namespace

RobustCholesky robust_cholesky(const MatrixXd& A, const std::string& label, double base_jitter,
                               const JitterLadder& ladder) {
  if (A.rows() != A.cols()) throw std::invalid_argument(label + ": matrix is not square");
  RobustCholesky out;
  const Index n = A.rows();
  if (n == 0 || (A.array() == 0.0).all()) {
    out.L = MatrixXd::Zero(n, n);
    out.zero = true;
    return out;
  }
  if (!A.allFinite()) throw FactorizationError(label + ": non-finite entries", {});

  const double scale = std::abs(A.diagonal().mean());
  std::vector<double> tried;
  auto attempt = [&](double jitter) {
    tried.push_back(jitter);
    if (try_llt(A, jitter, out.L)) {
      out.jitter = jitter;
      return true;
    }
    return false;
  };

  if (ladder.try_without && attempt(base_jitter)) return out;
  for (double rel = ladder.first; rel <= ladder.last * (1.0 + 1e-9); rel *= ladder.factor) {
    if (attempt(base_jitter + rel * scale)) return out;
  }
  throw FactorizationError(label + ": Cholesky factorization failed", std::move(tried));
}

MatrixXd RobustCholesky::solve(const MatrixXd& B) const {
  if (zero) throw std::logic_error("solve against a zero covariance");
  MatrixXd X = L.triangularView<Eigen::Lower>().solve(B);
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(X);
  return X;
}

VectorXd RobustCholesky::solve(const VectorXd& b) const {
  if (zero) throw std::logic_error("solve against a zero covariance");
  VectorXd x = L.triangularView<Eigen::Lower>().solve(b);
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

double RobustCholesky::log_det() const {
  return 2.0 * L.diagonal().array().log().sum();
}

MatrixXd kron(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

MatrixXd block_diag(const std::vector<MatrixXd>& blocks) {
  Index n = 0;
  for (const auto& b : blocks) n += b.rows();
  MatrixXd out = MatrixXd::Zero(n, n);
  Index off = 0;
  for (const auto& b : blocks) {
    out.block(off, off, b.rows(), b.cols()) = b;
    off += b.rows();
  }
  return out;
}

}  // namespace gmsde
