#include "gmsde/linalg.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace gmsde;

TEST_CASE("robust_cholesky factors an SPD matrix without jitter") {
  std::mt19937_64 rng(1);
  const MatrixXd R = testing::random_matrix(6, 6, rng);
  const MatrixXd A = R * R.transpose() + MatrixXd::Identity(6, 6);
  const auto ch = robust_cholesky(A, "A");
  CHECK(ch.jitter == 0.0);
  CHECK((ch.L * ch.L.transpose() - A).cwiseAbs().maxCoeff() < 1e-12);
  const VectorXd b = VectorXd::LinSpaced(6, -1, 1);
  CHECK((A * ch.solve(b) - b).norm() < 1e-10);
  CHECK(ch.log_det() == doctest::Approx(std::log(A.determinant())).epsilon(1e-10));
}

TEST_CASE("robust_cholesky climbs the ladder for a singular PSD matrix") {
  const VectorXd v = VectorXd::Ones(5);
  const MatrixXd A = v * v.transpose();
  const auto ch = robust_cholesky(A, "rank one");
  CHECK(ch.jitter > 0.0);
  CHECK(ch.jitter <= 1e-4 * A.diagonal().mean());
}

TEST_CASE("robust_cholesky reports the ladder on failure") {
  MatrixXd A = MatrixXd::Identity(3, 3);
  A(2, 2) = -5.0;
  try {
    robust_cholesky(A, "indefinite");
    FAIL("expected FactorizationError");
  } catch (const FactorizationError& e) {
    CHECK(e.ladder().size() >= 2);
    CHECK(std::string(e.what()).find("indefinite") != std::string::npos);
  }
}

TEST_CASE("zero covariance yields a zero factor") {
  const auto ch = robust_cholesky(MatrixXd::Zero(4, 4), "zero");
  CHECK(ch.zero);
  CHECK(ch.L.isZero());
}

TEST_CASE("kron and block_diag") {
  MatrixXd A(2, 2);
  A << 1, 2, 3, 4;
  const MatrixXd I = MatrixXd::Identity(2, 2);
  const MatrixXd K = kron(A, I);
  CHECK(K(0, 2) == 2.0);
  CHECK(K(3, 1) == 3.0);
  CHECK(K(0, 1) == 0.0);
  const MatrixXd B = block_diag({A, 2 * A});
  CHECK(B.rows() == 4);
  CHECK(B(3, 3) == 8.0);
  CHECK(B(0, 3) == 0.0);
}
