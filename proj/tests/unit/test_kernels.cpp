#include "gmsde/kernels.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace gmsde;

namespace {

std::vector<KernelSpec> specs() {
  return {KernelSpec::rbf(1.3, 0.7), KernelSpec::rbf(0.4, 3.0), KernelSpec::sigmoid(1.1, 0.5, 2.0),
          KernelSpec::sigmoid(0.7, 3.0, 0.05)};
}

}  // namespace

TEST_CASE("time derivatives match central differences") {
  std::mt19937_64 rng(3);
  for (const auto& spec : specs()) {
    for (int i = 0; i < 100; ++i) {
      const double a = testing::uniform(rng, 0.0, 10.0), b = testing::uniform(rng, 0.0, 10.0);
      const auto d = kernel_time_derivs(spec, a, b);
      const double h = 1e-5;
      const double da = (kernel_eval(spec, a + h, b) - kernel_eval(spec, a - h, b)) / (2 * h);
      const double db = (kernel_eval(spec, a, b + h) - kernel_eval(spec, a, b - h)) / (2 * h);
      const double dab = (kernel_time_derivs(spec, a, b + h).d_a - kernel_time_derivs(spec, a, b - h).d_a) / (2 * h);
      const double scale = std::max(1e-3, std::abs(kernel_eval(spec, a, b)));
      CHECK(std::abs(d.d_a - da) / std::max(std::abs(da), scale) < 1e-6);
      CHECK(std::abs(d.d_b - db) / std::max(std::abs(db), scale) < 1e-6);
      CHECK(std::abs(d.d_ab - dab) / std::max(std::abs(dab), scale) < 1e-6);
    }
  }
}

TEST_CASE("parameter derivatives match central differences") {
  std::mt19937_64 rng(4);
  for (const auto& spec : specs()) {
    for (int i = 0; i < 50; ++i) {
      const double a = testing::uniform(rng, 0.0, 10.0), b = testing::uniform(rng, 0.0, 10.0);
      const VectorXd g = kernel_param_derivs(spec, a, b);
      const VectorXd gfd = testing::central_diff(
          [&](const VectorXd& p) { return kernel_eval(KernelSpec{spec.kind, p}, a, b); }, spec.params, 1e-6);
      CHECK(testing::rel_err(g, gfd, 1e-6) < 1e-5);
    }
    const VectorXd t = VectorXd::LinSpaced(6, 0.0, 5.0);
    const auto grads = kernel_param_grads(spec, t);
    for (Index p = 0; p < spec.params.size(); ++p) {
      KernelSpec up = spec, dn = spec;
      up.params[p] += 1e-6;
      dn.params[p] -= 1e-6;
      const MatrixXd fd = (gram(up, t) - gram(dn, t)) / 2e-6;
      CHECK((grads[p] - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()) < 1e-5);
    }
  }
}

TEST_CASE("kernel matrices have the expected structure") {
  const VectorXd t = VectorXd::LinSpaced(20, 0.0, 10.0);
  for (const auto& spec : specs()) {
    const auto km = build_kernel_matrices(spec, t, 1e-6 * gram(spec, t).diagonal().mean());
    CHECK((km.C - km.C.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((km.Cpp - km.Cpp.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((km.pC - km.Cp.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const double cscale = km.C.diagonal().mean();
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(km.C).eigenvalues().minCoeff() > -1e-10 * cscale);
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(km.Cpp).eigenvalues().minCoeff() >
          -1e-10 * std::max(1.0, km.Cpp.diagonal().mean()));
    CHECK((km.A - km.A.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    MatrixXd Aj = km.A;
    Aj.diagonal().array() += 1e-6 * std::max(1e-12, km.A.diagonal().mean());
    CHECK(Eigen::LLT<MatrixXd>(Aj).info() == Eigen::Success);

    MatrixXd Cj = km.C;
    Cj.diagonal().array() += km.jitter;
    const MatrixXd D = Cj.transpose().ldlt().solve(km.pC).transpose();
    CHECK((km.D - D).cwiseAbs().maxCoeff() / std::max(1.0, D.cwiseAbs().maxCoeff()) < 1e-6);
  }
}

TEST_CASE("RBF closed forms") {
  const auto spec = KernelSpec::rbf(2.0, 0.5);
  CHECK(kernel_eval(spec, 1.0, 1.0) == doctest::Approx(2.0));
  CHECK(kernel_eval(spec, 0.0, 0.5) == doctest::Approx(2.0 * std::exp(-0.5)));
  CHECK(kernel_time_derivs(spec, 0.3, 0.3).d_ab == doctest::Approx(2.0 / 0.25));
  CHECK(kernel_kind_from_string(to_string(KernelKind::Sigmoid)) == KernelKind::Sigmoid);
  CHECK_THROWS(kernel_kind_from_string("matern"));
}
