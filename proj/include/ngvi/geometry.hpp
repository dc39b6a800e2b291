#pragma once

// Mean-field Gaussian parameterizations and the Bregman geometry induced by
// the convex conjugate A* of the Gaussian log-partition function.
//
// Every matrix in the full-covariance formulation is diagonal here, so each
// parameter block is stored as a length-d vector.  Coordinates never interact
// except through the likelihood, which lives in models.hpp.

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ngvi {

using Vec = Eigen::VectorXd;

/// Raised when a parameter leaves the open domain of its parameterization
/// (nonpositive variance, nonnegative Lambda, Xi - xi^2 <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Variances at or below this are treated as the boundary of Omega.
inline constexpr double kBoundaryVariance = 1e-14;

/// (mu, sigma^2): mean and per-coordinate variance.
struct StandardParams {
  Vec mu;
  Vec sigma2;

  std::size_t dim() const { return static_cast<std::size_t>(mu.size()); }
};

/// omega = (xi, Xi) with xi = E[z] and Xi = diag E[z z^T].  The state space of
/// the natural-gradient optimizers.
struct ExpectationParams {
  Vec xi;
  Vec Xi;

  std::size_t dim() const { return static_cast<std::size_t>(xi.size()); }
};

/// eta = (lambda, Lambda) = (Sigma^{-1} mu, -1/2 Sigma^{-1}).
struct NaturalParams {
  Vec lambda;
  Vec Lambda;

  std::size_t dim() const { return static_cast<std::size_t>(lambda.size()); }
};

/// theta = (mu, c) with c the diagonal Cholesky factor, c_i = sigma_i.
struct CholeskyParams {
  Vec mu;
  Vec c;

  std::size_t dim() const { return static_cast<std::size_t>(mu.size()); }
};

/// The compact set |mu_i| <= U, 1/D <= sigma_i^2 <= D.
struct DomainBox {
  double U = 1.0;
  double D = 2.0;
  std::size_t d = 1;

  /// Throws std::invalid_argument unless U >= 1, D > 1 and d >= 1.
  static DomainBox make(double U, double D, std::size_t d);

  double var_lo() const { return 1.0 / D; }
  double var_hi() const { return D; }
  bool contains(const ExpectationParams& w, double tol = 1e-12) const;
};

/// A vector in omega-space (the tangent/cotangent space of ExpectationParams),
/// e.g. a gradient of the objective with respect to (xi, Xi).
struct DualVector {
  Vec g_xi;
  Vec g_Xi;

  std::size_t dim() const { return static_cast<std::size_t>(g_xi.size()); }
  double squared_norm() const { return g_xi.squaredNorm() + g_Xi.squaredNorm(); }
  double norm() const;
};

// Validation.  Each throws DomainError describing the offending coordinate.
void validate(const StandardParams& p);
void validate(const ExpectationParams& w);
void validate(const NaturalParams& n);
void validate(const CholeskyParams& th);

StandardParams make_standard(Vec mu, Vec sigma2);
ExpectationParams make_expectation(Vec xi, Vec Xi);

ExpectationParams to_expectation(const StandardParams& p);
StandardParams to_standard(const ExpectationParams& w);

/// Per-coordinate variance Xi_i - xi_i^2, checked against the boundary.
Vec variances(const ExpectationParams& w);

/// grad A*(omega) = eta.
NaturalParams grad_A_star(const ExpectationParams& w);
/// grad A(eta) = omega; exact inverse of grad_A_star.
ExpectationParams grad_A(const NaturalParams& n);

/// A*(omega) = -1/2 sum log(Xi_i - xi_i^2) + d + (d/2) log 2.
/// The additive constant cancels in every gradient and divergence.
double conjugate_A_star(const ExpectationParams& w);

/// D_{A*}(w1, w2) evaluated literally from A* and grad A*.  Independent of
/// kl_gaussian; the two agree by the exponential-family KL identity.
double bregman_A_star(const ExpectationParams& w1, const ExpectationParams& w2);

/// KL(q(w1) || q(w2)) for diagonal Gaussians, in a cancellation-free form.
double kl_gaussian(const ExpectationParams& w1, const ExpectationParams& w2);

/// KL(q(w) || N(0, I)).
double kl_to_standard_normal(const ExpectationParams& w);

/// <a, w> summed over the xi-block and the Xi-block with unit weights.
double inner(const DualVector& a, const ExpectationParams& w);
double inner(const DualVector& a, const DualVector& b);
ExpectationParams difference(const ExpectationParams& a, const ExpectationParams& b);

/// The d diagonal 2x2 blocks of the Hessian of A*, ordered (xi_i, Xi_i).
std::vector<Eigen::Matrix2d> hessian_A_star(const ExpectationParams& w);

/// Dense 2d x 2d form of hessian_A_star in the interleaved coordinate order
/// (xi_1, Xi_1, xi_2, Xi_2, ...).
Eigen::MatrixXd hessian_A_star_dense(const ExpectationParams& w);

/// Bregman projection onto the box: clip mu to [-U, U] and sigma^2 to [1/D, D]
/// in standard coordinates, then map back.  Idempotent.
ExpectationParams project_box(const ExpectationParams& w, const DomainBox& box);

CholeskyParams to_cholesky(const ExpectationParams& w);
ExpectationParams from_cholesky(const CholeskyParams& th);

/// Interleaved flat vector (xi_1, Xi_1, ..., xi_d, Xi_d).
Vec flatten(const ExpectationParams& w);
Vec flatten(const DualVector& g);
ExpectationParams unflatten_expectation(const Vec& flat);

}  // namespace ngvi
