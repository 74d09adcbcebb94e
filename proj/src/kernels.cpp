#include "gmsde/kernels.hpp"

#include "gmsde/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace gmsde {

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Rbf:
      return "rbf";
    case KernelKind::Sigmoid:
      return "sigmoid";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "rbf") return KernelKind::Rbf;
  if (name == "sigmoid") return KernelKind::Sigmoid;
  throw std::invalid_argument("unknown kernel '" + name + "' (expected rbf or sigmoid)");
}

KernelSpec KernelSpec::rbf(double variance, double lengthscale) {
  return {KernelKind::Rbf, (VectorXd(2) << variance, lengthscale).finished()};
}

KernelSpec KernelSpec::sigmoid(double variance, double offset, double slope) {
  return {KernelKind::Sigmoid, (VectorXd(3) << variance, offset, slope).finished()};
}

Index KernelSpec::param_count(KernelKind kind) { return kind == KernelKind::Rbf ? 2 : 3; }

std::vector<std::string> KernelSpec::param_names(KernelKind kind) {
  if (kind == KernelKind::Rbf) return {"variance", "lengthscale"};
  return {"variance", "offset", "slope"};
}

namespace {

void check(const KernelSpec& spec) {
  if (spec.params.size() != KernelSpec::param_count(spec.kind))
    throw std::invalid_argument("kernel " + to_string(spec.kind) + ": wrong parameter count");
}

// Pieces of the arcsine kernel shared by the value and its derivatives.
struct ArcsineTerms {
  double u, va, vb, w, r, q;
};

ArcsineTerms arcsine_terms(double offset, double slope, double a, double b) {
  ArcsineTerms s{};
  s.u = slope * a * b + offset;
  s.va = slope * a * a + offset + 1.0;
  s.vb = slope * b * b + offset + 1.0;
  s.w = std::sqrt(s.va * s.vb);
  s.r = s.u / s.w;
  s.q = 1.0 - s.r * s.r;
  return s;
}

}  // namespace

double kernel_eval(const KernelSpec& spec, double a, double b) {
  check(spec);
  const auto& p = spec.params;
  if (spec.kind == KernelKind::Rbf) {
    const double d = a - b;
    return p[0] * std::exp(-d * d / (2.0 * p[1] * p[1]));
  }
  return p[0] * std::asin(arcsine_terms(p[1], p[2], a, b).r);
}

KernelTimeDerivs kernel_time_derivs(const KernelSpec& spec, double a, double b) {
  check(spec);
  const auto& p = spec.params;
  if (spec.kind == KernelKind::Rbf) {
    const double l2 = p[1] * p[1];
    const double d = a - b;
    const double k = p[0] * std::exp(-d * d / (2.0 * l2));
    return {-k * d / l2, k * d / l2, k * (1.0 / l2 - d * d / (l2 * l2))};
  }
  const double s = p[2];
  const auto t = arcsine_terms(p[1], s, a, b);
  const double ra = (s / t.w) * (b - t.u * a / t.va);
  const double rb = (s / t.w) * (a - t.u * b / t.vb);
  const double rab = -(s * b / t.vb) * ra +
                     (s / std::sqrt(t.va) - s * s * a * a / std::pow(t.va, 1.5)) / std::sqrt(t.vb);
  const double inv_sq = 1.0 / std::sqrt(t.q);
  return {p[0] * ra * inv_sq, p[0] * rb * inv_sq,
          p[0] * (rab * inv_sq + t.r * ra * rb * inv_sq * inv_sq * inv_sq)};
}

VectorXd kernel_param_derivs(const KernelSpec& spec, double a, double b) {
  check(spec);
  const auto& p = spec.params;
  if (spec.kind == KernelKind::Rbf) {
    const double d = a - b;
    const double e = std::exp(-d * d / (2.0 * p[1] * p[1]));
    return (VectorXd(2) << e, p[0] * e * d * d / (p[1] * p[1] * p[1])).finished();
  }
  const auto t = arcsine_terms(p[1], p[2], a, b);
  const double inv_sq = 1.0 / std::sqrt(t.q);
  const double r_offset = 1.0 / t.w - 0.5 * t.r * (1.0 / t.va + 1.0 / t.vb);
  const double r_slope = a * b / t.w - 0.5 * t.r * (a * a / t.va + b * b / t.vb);
  return (VectorXd(3) << std::asin(t.r), p[0] * r_offset * inv_sq, p[0] * r_slope * inv_sq)
      .finished();
}

MatrixXd gram(const KernelSpec& spec, const VectorXd& t) {
  const Index N = t.size();
  MatrixXd C(N, N);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j <= i; ++j) C(i, j) = C(j, i) = kernel_eval(spec, t[i], t[j]);
  return C;
}

KernelMatrices build_kernel_matrices(const KernelSpec& spec, const VectorXd& t, double jitter) {
  for (Index i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1]))
      throw std::invalid_argument("build_kernel_matrices: times must be strictly increasing");
  const Index N = t.size();
  KernelMatrices km;
  km.C = gram(spec, t);
  km.Cp.resize(N, N);
  km.pC.resize(N, N);
  km.Cpp.resize(N, N);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < N; ++j) {
      const auto d = kernel_time_derivs(spec, t[i], t[j]);
      km.Cp(i, j) = d.d_a;
      km.pC(i, j) = d.d_b;
      km.Cpp(i, j) = d.d_ab;
    }
  km.Cpp = symmetrize(km.Cpp);

  const auto chol = robust_cholesky(km.C, "kernel gram matrix", jitter);
  km.jitter = chol.jitter;
  // D = Cp C^-1  <=>  D^T = C^-1 Cp^T = C^-1 pC
  km.D = chol.solve(km.pC).transpose();
  km.A = symmetrize(km.Cpp - km.D * km.pC);
  return km;
}

std::vector<MatrixXd> kernel_param_grads(const KernelSpec& spec, const VectorXd& t) {
  const Index N = t.size();
  const Index P = KernelSpec::param_count(spec.kind);
  std::vector<MatrixXd> out(P, MatrixXd(N, N));
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j <= i; ++j) {
      const VectorXd g = kernel_param_derivs(spec, t[i], t[j]);
      for (Index p = 0; p < P; ++p) out[p](i, j) = out[p](j, i) = g[p];
    }
  return out;
}

}  // namespace gmsde
