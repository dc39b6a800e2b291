#pragma once

// Numerical checks of the landscape: ELBO Hessians, relative-smoothness
// certificates, hidden-convexity and PL constants, the Bregman forward-backward
// envelope, and audits of optimizer traces.

#include "ngvi/geometry.hpp"
#include "ngvi/models.hpp"
#include "ngvi/optimizers.hpp"

#include <Eigen/Core>

#include <optional>
#include <utility>
#include <vector>

namespace ngvi {

/// Hessian of E_q[f] in omega, interleaved order (xi_1, Xi_1, ...), assembled
/// from H = E[grad^2 f], B = E[grad^3 f] and C = E[grad^4 f].
Eigen::MatrixXd hessian_loglik(const ExpectationParams& w, const LikelihoodModel& model);

/// hessian_loglik + hessian of the KL term, which equals hessian_A_star.
Eigen::MatrixXd hessian_elbo(const ExpectationParams& w, const LikelihoodModel& model);

struct GridSpec {
  std::size_t points_per_axis = 15;
  /// Tensor grids larger than this are replaced by uniform random sampling.
  std::size_t max_tensor_points = 200000;
  std::size_t random_samples = 10000;
  std::uint64_t seed = 0;
};

/// Tensor grid over the box: mu linear in [-U, U], sigma^2 geometric in
/// [1/D, D].  Falls back to sampling when the grid is too large; `sampled` is
/// set accordingly.
std::vector<ExpectationParams> box_grid(const DomainBox& box, const GridSpec& spec, bool* sampled = nullptr);

/// Per-point outcome of the univariate closed-form conditions.
struct IffAgreement {
  std::size_t points = 0;
  std::size_t disagreements = 0;  // closed form and eigen-slack differ, neither within tolerance of 0
};

struct SmoothnessCertificate {
  double alpha = 0.0;  // for the full ELBO
  double beta = 0.0;
  double alpha_loglik = 0.0;  // for E_q[f] alone; the KL term adds exactly 1
  double beta_loglik = 0.0;
  std::vector<ExpectationParams> grid;
  double min_slack = 0.0;
  bool sampled = false;
  bool coarse = false;
  std::optional<IffAgreement> iff;  // d = 1 only
};

/// With `alpha_beta` set, evaluates the eigen-slack of the given full-ELBO
/// pair.  Otherwise the smallest beta and largest alpha valid on the grid are
/// computed as extreme generalized eigenvalues of (hessian_elbo, hessian_A_star).
SmoothnessCertificate certify_relative_smoothness(const LikelihoodModel& model, const DomainBox& box,
                                                  const GridSpec& grid,
                                                  std::optional<std::pair<double, double>> alpha_beta = {});

/// The univariate conditions for the log-likelihood term at one point.
/// `upper` selects the smoothness side (beta); otherwise the weak-convexity side.
struct IffTerms {
  double first = 0.0;   // each must be >= 0 for the condition to hold
  double second = 0.0;
  double third = 0.0;
  bool holds(double tol = 0.0) const { return first >= -tol && second >= -tol && third >= -tol; }
};
IffTerms univariate_iff_terms(const ExpectationParams& w, const LikelihoodModel& model, double param, bool upper);

/// Agreement between univariate_iff_terms and the eigen-slack test for the
/// log-likelihood parameter `param` on every grid point.
IffAgreement check_univariate_iff(const LikelihoodModel& model, const std::vector<ExpectationParams>& grid,
                                  double param, bool upper, double tol = 1e-8);

struct SufficientConstants {
  double L1 = 0.0;
  double L2 = 0.0;
  double beta = 0.0;  // for the log-likelihood term
  bool heuristic = false;
};

/// Logistic: L1 = sum ||x_i||_inf, L2 = sum ||x_i||_inf^2 / 4.  For d = 1,
/// beta = D L2 / 2 + sqrt(2D) L1 / 2; for d > 1 the scaling
/// d D^2 (U + D)(L1 + U L2) with unit constant, flagged heuristic.
/// Linear: beta = 0 (third and fourth derivatives vanish).  Poisson throws.
SufficientConstants sufficient_constants(ModelKind kind, const Dataset& data, const DomainBox& box,
                                         double noise_variance = 1.0);

struct Moduli {
  double mu_C = 0.0;
  double mu_H = 1.0;
  double C_S = 0.0;
  double C_L = 0.0;
  double mu_B = 0.0;
  DomainBox box;
};
Moduli moduli(const DomainBox& box);

struct BFBEResult {
  double value = 0.0;
  double rho = 0.0;
  ExpectationParams minimizer;
};

/// -2 rho min_{w' in box} [<g, w' - w> + rho D_{A*}(w', w)] with g = grad l(w).
BFBEResult bfbe(const ExpectationParams& w, double rho, const LikelihoodModel& model, const DomainBox& box);
BFBEResult bfbe(const ExpectationParams& w, const DualVector& grad, double rho, const DomainBox& box);

/// ||grad l(w)||^2 - 2 mu_C^2 (l(w) - ell_star).  Requires w strictly inside the box.
double pl_residual(const ExpectationParams& w, const LikelihoodModel& model, const DomainBox& box, double ell_star);

/// -U(x^2+1) < xy < U(x^2+1) and 1/D < x^2+1 < D.
bool assumption2_linear1d(double x, double y, double U, double D);

struct DescentReport {
  std::vector<std::size_t> violations;  // t at which l(w_t) > l(w_{t-1}) + tol
  double max_increase = 0.0;
  bool passed() const { return violations.empty(); }
};

/// Requires an exact-gradient trace whose step sizes do not exceed 1/L.
DescentReport descent_audit(const OptimizerTrace& trace, double L, double tol = 1e-10);

enum class CoercivityPath { kMuRay, kSigmaToZero, kSigmaToInf };

struct CoercivityReport {
  std::vector<double> radii;
  std::vector<double> values;
  bool tail_increasing = false;
};

/// Evaluates l at 20 geometrically spaced points along the path and checks
/// that the last 10 increase strictly.  Mean rays run along (1, ..., 1)/sqrt(d)
/// with unit variances; variance paths keep the mean at 0.
CoercivityReport coercivity_scan(const LikelihoodModel& model, CoercivityPath path);

struct SteinCheck {
  double lhs = 0.0;  // |E[d^3 f / dz_i dz_j^2]|
  double rhs = 0.0;  // sigma_j^{-2} sup |df/dz_i|
  bool holds() const { return lhs <= rhs * (1.0 + 1e-12) + 1e-15; }
};

/// Logistic only: sup |df/dz_i| <= sum_k |x_ki|.
SteinCheck stein_bound_check(const LikelihoodModel& model, const ExpectationParams& w, std::size_t i, std::size_t j);

struct OptimumEstimate {
  double ell_star = 0.0;
  ExpectationParams point;
  std::size_t iterations = 0;
  double step_norm = 0.0;  // ||w_{t+1} - w_t|| / gamma at the last step
  bool converged = false;
};

/// Deterministic Proj-SNGD with exact gradients and constant gamma; stops when
/// ||w_{t+1} - w_t|| / gamma < tol or after max_iter steps.
OptimumEstimate optimal_value(const LikelihoodModel& model, const DomainBox& box, const ExpectationParams& w0,
                              double gamma, std::size_t max_iter = 100000, double tol = 1e-12);

}  // namespace ngvi
