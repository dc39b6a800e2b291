#pragma once

// Likelihood models, the negative ELBO and its gradients.
//
// Every likelihood depends on z only through the scalar s = x_i^T z, so the
// per-point negative log-likelihood is a function phi(s) and all Gaussian
// expectations reduce to one-dimensional integrals over
// s ~ N(x_i^T mu, sum_j x_ij^2 sigma_j^2).

#include "ngvi/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

namespace ngvi {

enum class ModelKind { kLinear, kLogistic, kPoisson };

std::string_view to_string(ModelKind kind);
/// Throws std::invalid_argument on unknown names.
ModelKind parse_model_kind(std::string_view name);

/// Rows of x are data points.
struct Dataset {
  Eigen::MatrixXd x;
  Vec y;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(x.cols()); }
};

struct LikelihoodModel {
  ModelKind kind = ModelKind::kLogistic;
  Dataset data;
  double noise_variance = 1.0;  // linear only

  /// Checks n >= 1, label domain per kind and noise_variance > 0.
  static LikelihoodModel make(ModelKind kind, Dataset data, double noise_variance = 1.0);

  std::size_t n() const { return data.n(); }
  std::size_t d() const { return data.d(); }
};

/// phi, phi', phi'', phi''', phi'''' of the per-point negative log-likelihood
/// as a function of s = x^T z.
using ScalarDerivatives = std::array<double, 5>;
ScalarDerivatives point_loss_derivatives(const LikelihoodModel& model, double y, double s);

struct EstimatorConfig {
  std::size_t batch_size = 1;   // m
  std::size_t mc_samples = 1;   // N
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument unless 1 <= m <= n and N >= 1.
  void validate(std::size_t n) const;
};

struct GradientEstimate : DualVector {
  bool is_stochastic = false;
};

/// Gradient of the objective in Cholesky coordinates (mu, c).
struct CholeskyGradient {
  Vec g_mu;
  Vec g_c;
};

// How Gaussian expectations are evaluated.
struct ClosedForm {};
struct Quadrature {
  std::size_t nodes = 100;
};
struct MonteCarlo {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};
using ExpectationMethod = std::variant<ClosedForm, Quadrature, MonteCarlo>;

/// Closed form for linear and Poisson, quadrature for logistic.
ExpectationMethod default_method(ModelKind kind);

/// E[phi^(k)(s)], k = 0..4, for data point i at the given variational state.
using LossMoments = std::array<double, 5>;
std::vector<LossMoments> point_moments(const StandardParams& p, const LikelihoodModel& model,
                                       const ExpectationMethod& method);

double neg_loglik(const LikelihoodModel& model, const Vec& z);

/// Gradient of KL(q || N(0, I)) in omega.
GradientEstimate kl_term_grad(const ExpectationParams& w);

/// -E_q[log p(D | z)].
double expected_neg_loglik(const ExpectationParams& w, const LikelihoodModel& model,
                           const ExpectationMethod& method);

/// Negative ELBO l(omega) = -E_q[log p(D|z)] + KL(q || p).  ClosedForm is
/// rejected for logistic.
double elbo(const ExpectationParams& w, const LikelihoodModel& model, const ExpectationMethod& method);
double elbo(const ExpectationParams& w, const LikelihoodModel& model);

/// Exact gradient of l in omega via the Bonnet/Price identities.
GradientEstimate exact_grad(const ExpectationParams& w, const LikelihoodModel& model);
GradientEstimate exact_grad(const ExpectationParams& w, const LikelihoodModel& model,
                            const ExpectationMethod& method);

/// Mini-batch Monte-Carlo estimator: m indices with replacement, N shared
/// latent samples.  Unbiased for exact_grad.  Streams are keyed by
/// (cfg.seed, iteration).
GradientEstimate stoch_grad(const ExpectationParams& w, const LikelihoodModel& model,
                            const EstimatorConfig& cfg, std::uint64_t iteration = 0);

/// 16 n^2 ((s1 + U s2 / 4)^2 + s2^2 / 64) with s1 = max ||x_i||,
/// s2 = max ||x_i o x_i||.  Bounds E||g_hat - g||^2 for the logistic estimator
/// on the box for any batch size, so `batch_size` only enters validation.
double variance_bound_logistic(const Dataset& data, const DomainBox& box, std::size_t batch_size);

// Cholesky-space objective used by Prox-SGD / Proj-SGD.
//   L~(theta) = E_q[f(z) - log p(z)]
//   L(theta)  = L~(theta) + E_q[log q(z)] = l(c^{-1}(theta))
double cholesky_objective(const CholeskyParams& th, const LikelihoodModel& model, bool include_entropy);
CholeskyGradient exact_grad_cholesky(const CholeskyParams& th, const LikelihoodModel& model,
                                     bool include_entropy);
CholeskyGradient stoch_grad_cholesky(const CholeskyParams& th, const LikelihoodModel& model,
                                     const EstimatorConfig& cfg, std::uint64_t iteration,
                                     bool include_entropy);

}  // namespace ngvi
