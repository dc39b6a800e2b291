#include "ngvi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ngvi {

namespace {

[[noreturn]] void domain_fail(const char* what, std::size_t i, double value) {
  std::ostringstream os;
  os << what << " at coordinate " << i << " (value " << value << ")";
  throw DomainError(os.str());
}

void check_sizes(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) throw DomainError(std::string(what) + ": block sizes differ");
  if (a == 0) throw DomainError(std::string(what) + ": empty parameter");
}

// x - log1p(x), accurate for small |x|.
double x_minus_log1p(double x) {
  if (std::abs(x) < 0.1) {
    double term = x * x;
    double sum = 0.0;
    for (int k = 2; k < 40; ++k) {
      const double contrib = term / k;
      sum += (k % 2 == 0) ? contrib : -contrib;
      if (std::abs(contrib) < 1e-18 * std::abs(sum)) break;
      term *= x;
    }
    return sum;
  }
  return x - std::log1p(x);
}

}  // namespace

DomainBox DomainBox::make(double U, double D, std::size_t d) {
  if (!(U >= 1.0)) throw std::invalid_argument("DomainBox: U must be >= 1");
  if (!(D > 1.0)) throw std::invalid_argument("DomainBox: D must be > 1");
  if (d == 0) throw std::invalid_argument("DomainBox: dimension must be positive");
  return DomainBox{U, D, d};
}

bool DomainBox::contains(const ExpectationParams& w, double tol) const {
  if (w.dim() != d) return false;
  for (std::size_t i = 0; i < d; ++i) {
    const double var = w.Xi[i] - w.xi[i] * w.xi[i];
    if (std::abs(w.xi[i]) > U * (1.0 + tol)) return false;
    if (var < var_lo() * (1.0 - tol) || var > var_hi() * (1.0 + tol)) return false;
  }
  return true;
}

double DualVector::norm() const { return std::sqrt(squared_norm()); }

void validate(const StandardParams& p) {
  check_sizes(p.mu.size(), p.sigma2.size(), "StandardParams");
  for (Eigen::Index i = 0; i < p.sigma2.size(); ++i) {
    if (!std::isfinite(p.mu[i])) domain_fail("non-finite mean", i, p.mu[i]);
    if (!(p.sigma2[i] > kBoundaryVariance) || !std::isfinite(p.sigma2[i]))
      domain_fail("nonpositive variance", i, p.sigma2[i]);
  }
}

void validate(const ExpectationParams& w) { (void)variances(w); }

void validate(const NaturalParams& n) {
  check_sizes(n.lambda.size(), n.Lambda.size(), "NaturalParams");
  for (Eigen::Index i = 0; i < n.Lambda.size(); ++i) {
    if (!std::isfinite(n.lambda[i])) domain_fail("non-finite lambda", i, n.lambda[i]);
    if (!(n.Lambda[i] < 0.0) || !std::isfinite(n.Lambda[i]))
      domain_fail("Lambda outside the natural domain (must be < 0)", i, n.Lambda[i]);
  }
}

void validate(const CholeskyParams& th) {
  check_sizes(th.mu.size(), th.c.size(), "CholeskyParams");
  for (Eigen::Index i = 0; i < th.c.size(); ++i) {
    if (!(th.c[i] > 0.0) || !std::isfinite(th.c[i])) domain_fail("nonpositive Cholesky diagonal", i, th.c[i]);
  }
}

StandardParams make_standard(Vec mu, Vec sigma2) {
  StandardParams p{std::move(mu), std::move(sigma2)};
  validate(p);
  return p;
}

ExpectationParams make_expectation(Vec xi, Vec Xi) {
  ExpectationParams w{std::move(xi), std::move(Xi)};
  validate(w);
  return w;
}

Vec variances(const ExpectationParams& w) {
  check_sizes(w.xi.size(), w.Xi.size(), "ExpectationParams");
  Vec var(w.xi.size());
  for (Eigen::Index i = 0; i < w.xi.size(); ++i) {
    if (!std::isfinite(w.xi[i]) || !std::isfinite(w.Xi[i])) domain_fail("non-finite expectation parameter", i, w.Xi[i]);
    var[i] = w.Xi[i] - w.xi[i] * w.xi[i];
    if (!(var[i] > kBoundaryVariance)) domain_fail("point outside Omega (Xi - xi^2 <= 0)", i, var[i]);
  }
  return var;
}

ExpectationParams to_expectation(const StandardParams& p) {
  validate(p);
  return {p.mu, p.sigma2 + p.mu.cwiseProduct(p.mu)};
}

StandardParams to_standard(const ExpectationParams& w) { return {w.xi, variances(w)}; }

NaturalParams grad_A_star(const ExpectationParams& w) {
  const Vec var = variances(w);
  return {w.xi.cwiseQuotient(var), (-0.5 * var.cwiseInverse()).eval()};
}

ExpectationParams grad_A(const NaturalParams& n) {
  validate(n);
  const Vec sigma2 = (-0.5 * n.Lambda.cwiseInverse()).eval();
  for (Eigen::Index i = 0; i < sigma2.size(); ++i) {
    if (!(sigma2[i] > kBoundaryVariance)) domain_fail("variance collapsed to the boundary", i, sigma2[i]);
  }
  return to_expectation({sigma2.cwiseProduct(n.lambda), sigma2});
}

double conjugate_A_star(const ExpectationParams& w) {
  const Vec var = variances(w);
  const double d = static_cast<double>(var.size());
  return -0.5 * var.array().log().sum() + d + 0.5 * d * std::numbers::ln2;
}

double bregman_A_star(const ExpectationParams& w1, const ExpectationParams& w2) {
  if (w1.dim() != w2.dim()) throw DomainError("bregman_A_star: dimension mismatch");
  const NaturalParams eta2 = grad_A_star(w2);
  const double lin = eta2.lambda.dot(w1.xi - w2.xi) + eta2.Lambda.dot(w1.Xi - w2.Xi);
  return conjugate_A_star(w1) - conjugate_A_star(w2) - lin;
}

double kl_gaussian(const ExpectationParams& w1, const ExpectationParams& w2) {
  if (w1.dim() != w2.dim()) throw DomainError("kl_gaussian: dimension mismatch");
  const Vec v1 = variances(w1);
  const Vec v2 = variances(w2);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < v1.size(); ++i) {
    const double rel = (v1[i] - v2[i]) / v2[i];
    const double dm = w1.xi[i] - w2.xi[i];
    kl += 0.5 * (x_minus_log1p(rel) + dm * dm / v2[i]);
  }
  return kl;
}

double kl_to_standard_normal(const ExpectationParams& w) {
  const Vec var = variances(w);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    kl += 0.5 * (x_minus_log1p(var[i] - 1.0) + w.xi[i] * w.xi[i]);
  }
  return kl;
}

double inner(const DualVector& a, const ExpectationParams& w) {
  return a.g_xi.dot(w.xi) + a.g_Xi.dot(w.Xi);
}

double inner(const DualVector& a, const DualVector& b) {
  return a.g_xi.dot(b.g_xi) + a.g_Xi.dot(b.g_Xi);
}

ExpectationParams difference(const ExpectationParams& a, const ExpectationParams& b) {
  return {a.xi - b.xi, a.Xi - b.Xi};
}

std::vector<Eigen::Matrix2d> hessian_A_star(const ExpectationParams& w) {
  const Vec var = variances(w);
  std::vector<Eigen::Matrix2d> blocks(var.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    const double mu = w.xi[i];
    const double s2 = var[i];
    const double inv4 = 1.0 / (s2 * s2);
    blocks[i] << (2.0 * mu * mu + s2) * inv4, -mu * inv4,
                 -mu * inv4, 0.5 * inv4;
  }
  return blocks;
}

Eigen::MatrixXd hessian_A_star_dense(const ExpectationParams& w) {
  const auto blocks = hessian_A_star(w);
  const Eigen::Index d = static_cast<Eigen::Index>(blocks.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  for (Eigen::Index i = 0; i < d; ++i) h.block<2, 2>(2 * i, 2 * i) = blocks[i];
  return h;
}

ExpectationParams project_box(const ExpectationParams& w, const DomainBox& box) {
  if (w.dim() != box.d) throw DomainError("project_box: dimension mismatch");
  StandardParams p = to_standard(w);
  for (Eigen::Index i = 0; i < p.mu.size(); ++i) {
    p.mu[i] = std::clamp(p.mu[i], -box.U, box.U);
    p.sigma2[i] = std::clamp(p.sigma2[i], box.var_lo(), box.var_hi());
  }
  return to_expectation(p);
}

CholeskyParams to_cholesky(const ExpectationParams& w) {
  return {w.xi, variances(w).cwiseSqrt()};
}

ExpectationParams from_cholesky(const CholeskyParams& th) {
  validate(th);
  return to_expectation({th.mu, th.c.cwiseProduct(th.c)});
}

Vec flatten(const ExpectationParams& w) {
  Vec flat(2 * w.xi.size());
  for (Eigen::Index i = 0; i < w.xi.size(); ++i) {
    flat[2 * i] = w.xi[i];
    flat[2 * i + 1] = w.Xi[i];
  }
  return flat;
}

Vec flatten(const DualVector& g) {
  Vec flat(2 * g.g_xi.size());
  for (Eigen::Index i = 0; i < g.g_xi.size(); ++i) {
    flat[2 * i] = g.g_xi[i];
    flat[2 * i + 1] = g.g_Xi[i];
  }
  return flat;
}

ExpectationParams unflatten_expectation(const Vec& flat) {
  const Eigen::Index d = flat.size() / 2;
  ExpectationParams w{Vec(d), Vec(d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    w.xi[i] = flat[2 * i];
    w.Xi[i] = flat[2 * i + 1];
  }
  return w;
}

}  // namespace ngvi
