#pragma once

// SNGD, Proj-SNGD, Prox-SGD and Proj-SGD, their step-size schedules and the
// run loop that produces traces.

#include "ngvi/geometry.hpp"
#include "ngvi/models.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ngvi {

/// Raised by sngd_step when the dual iterate leaves the natural domain
/// (some Lambda_i >= 0) or the variance collapses.
class BoundaryEscape : public DomainError {
 public:
  using DomainError::DomainError;
};

enum class ScheduleKind { kConstant, kInvSqrt, kTheoremConstant, kFastConv };

struct StepSchedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double gamma = 0.0;    // constant value or gamma_0
  double L = 0.0;
  double V2 = 0.0;
  double lambda0 = 0.0;
  double mu_B = 0.0;
  std::size_t T = 0;

  static StepSchedule constant(double gamma);
  static StepSchedule inv_sqrt(double gamma0);
  static StepSchedule theorem_constant(double L, double V2, double lambda0, std::size_t T);
  static StepSchedule fast_conv(double L, double mu_B, std::size_t T);

  /// Throws std::invalid_argument on nonpositive rates (V2 = 0 is allowed).
  void validate() const;
};

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

/// Step size applied at iteration t (the step from omega_t to omega_{t+1}).
double step_size(const StepSchedule& s, std::size_t t);

/// Unprojected dual step: grad A*(w') = grad A*(w) - gamma g.
ExpectationParams sngd_step(const ExpectationParams& w, const DualVector& g, double gamma);

/// argmin over the box of gamma <g, w'> + D_{A*}(w', w).  The problem is
/// separable per coordinate and in (mu, sigma^2), so it is solved in closed
/// form, including when the dual step leaves the natural domain.
ExpectationParams proj_sngd_step(const ExpectationParams& w, const DualVector& g, double gamma,
                                 const DomainBox& box);

/// Euclidean step on L~ followed by the proximal step of -sum log c.
CholeskyParams prox_sgd_step(const CholeskyParams& th, const CholeskyGradient& g, double gamma);

/// Euclidean step on L followed by clipping c at 1/sqrt(M).
CholeskyParams proj_sgd_step(const CholeskyParams& th, const CholeskyGradient& g, double gamma, double M);

enum class Algorithm { kSngd, kProjSngd, kProxSgd, kProjSgd };
std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

enum class GradientKind { kExact, kStochastic, kNoisyExact };
std::string_view to_string(GradientKind k);
GradientKind parse_gradient_kind(std::string_view name);

struct GradientSpec {
  GradientKind kind = GradientKind::kExact;
  std::size_t batch_size = 1;  // stochastic
  std::size_t mc_samples = 1;  // stochastic
  double noise_V2 = 0.0;       // noisy_exact: E||noise||^2
};

struct RunOptions {
  Algorithm algorithm = Algorithm::kProjSngd;
  StepSchedule schedule = StepSchedule::constant(0.1);
  std::size_t T = 100;
  std::uint64_t seed = 0;
  std::optional<DomainBox> box;  // required by proj_sngd; proj_sgd uses box.D as M if M is unset
  std::optional<double> proj_sgd_M;
  GradientSpec gradient;
  std::size_t log_every = 1;
  std::optional<double> bfbe_rho;  // also log the BFBE (needs a box)
  /// Stop early once the exact gradient norm at a logged iterate is below this.
  std::optional<double> grad_tol;
  /// Stop early once a logged objective is at or below this value.
  std::optional<double> stop_below;
};

struct TraceRow {
  std::size_t t = 0;
  double gamma = 0.0;
  double elbo = 0.0;
  double grad_norm = 0.0;
  std::optional<double> bfbe;
  double elapsed_s = 0.0;
};

struct Snapshot {
  std::size_t t = 0;
  StandardParams params;
};

struct OptimizerTrace {
  Algorithm algorithm = Algorithm::kProjSngd;
  GradientKind gradient = GradientKind::kExact;
  std::vector<TraceRow> rows;
  std::vector<Snapshot> snapshots;
  std::vector<double> gammas;  // gamma_t for every executed step
  ExpectationParams final_point;
  std::size_t iterations = 0;  // steps executed
  std::size_t output_index = 0;
  std::optional<ExpectationParams> output_point;
  bool diverged = false;
  std::string divergence;
};

/// Samples t in [0, gammas.size()) with probability gamma_t / sum gamma.
/// `draw` selects an independent draw for the same seed.
std::size_t sample_output_index(const std::vector<double>& gammas, std::uint64_t seed, std::uint64_t draw = 0);

/// Every optimizer starts from w0 (mapped to Cholesky coordinates for the SGD
/// family).  Objective and gradient norms are exact, whatever gradient the
/// optimizer uses.  A boundary escape or a non-finite objective ends the run
/// with a divergence row.
OptimizerTrace run(const LikelihoodModel& model, const ExpectationParams& w0, const RunOptions& options);

}  // namespace ngvi
