#include "ngvi/optimizers.hpp"

#include "ngvi/diagnostics.hpp"
#include "ngvi/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ngvi {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
}

void require_finite(const DualVector& g) {
  if (!g.g_xi.allFinite() || !g.g_Xi.allFinite()) throw DomainError("non-finite gradient");
}

// Adds isotropic Gaussian noise with E||noise||^2 = V2 to every coordinate of
// the concatenated gradient.
void add_noise(Vec& a, Vec& b, double V2, std::uint64_t seed, std::uint64_t t) {
  if (V2 <= 0.0) return;
  CounterStream stream(seed, t, StreamPurpose::kGradientNoise);
  std::normal_distribution<double> normal(0.0, std::sqrt(V2 / static_cast<double>(a.size() + b.size())));
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += normal(stream);
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] += normal(stream);
}

bool is_sgd_family(Algorithm a) { return a == Algorithm::kProxSgd || a == Algorithm::kProjSgd; }

}  // namespace

StepSchedule StepSchedule::constant(double gamma) {
  StepSchedule s;
  s.kind = ScheduleKind::kConstant;
  s.gamma = gamma;
  return s;
}

StepSchedule StepSchedule::inv_sqrt(double gamma0) {
  StepSchedule s;
  s.kind = ScheduleKind::kInvSqrt;
  s.gamma = gamma0;
  return s;
}

StepSchedule StepSchedule::theorem_constant(double L, double V2, double lambda0, std::size_t T) {
  StepSchedule s;
  s.kind = ScheduleKind::kTheoremConstant;
  s.L = L;
  s.V2 = V2;
  s.lambda0 = lambda0;
  s.T = T;
  return s;
}

StepSchedule StepSchedule::fast_conv(double L, double mu_B, std::size_t T) {
  StepSchedule s;
  s.kind = ScheduleKind::kFastConv;
  s.L = L;
  s.mu_B = mu_B;
  s.T = T;
  return s;
}

void StepSchedule::validate() const {
  switch (kind) {
    case ScheduleKind::kConstant:
    case ScheduleKind::kInvSqrt:
      require_positive(gamma, "step size");
      return;
    case ScheduleKind::kTheoremConstant:
      require_positive(L, "L");
      require_positive(lambda0, "lambda0");
      if (!(V2 >= 0.0) || !std::isfinite(V2)) throw std::invalid_argument("V2 must be nonnegative");
      if (T == 0) throw std::invalid_argument("schedule horizon T must be positive");
      return;
    case ScheduleKind::kFastConv:
      require_positive(L, "L");
      require_positive(mu_B, "mu_B");
      if (T == 0) throw std::invalid_argument("schedule horizon T must be positive");
      return;
  }
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kInvSqrt: return "inv_sqrt";
    case ScheduleKind::kTheoremConstant: return "theorem_constant";
    case ScheduleKind::kFastConv: return "fast_conv";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  for (auto k : {ScheduleKind::kConstant, ScheduleKind::kInvSqrt, ScheduleKind::kTheoremConstant,
                 ScheduleKind::kFastConv}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "'");
}

double step_size(const StepSchedule& s, std::size_t t) {
  s.validate();
  switch (s.kind) {
    case ScheduleKind::kConstant:
      return s.gamma;
    case ScheduleKind::kInvSqrt:
      return s.gamma / std::sqrt(static_cast<double>(std::max<std::size_t>(t, 1)));
    case ScheduleKind::kTheoremConstant: {
      const double cap = 1.0 / (2.0 * s.L);
      if (s.V2 == 0.0) return cap;
      return std::min(cap, std::sqrt(s.lambda0 / (s.V2 * s.L * static_cast<double>(s.T))));
    }
    case ScheduleKind::kFastConv: {
      const double cap = 1.0 / (2.0 * s.L);
      const double T = static_cast<double>(s.T);
      const double tt = static_cast<double>(t);
      if (tt <= T / 2.0 && T <= 6.0 * s.L / s.mu_B) return cap;
      // Before ceil(T/2) the decaying branch would exceed 1/(2L) or turn
      // negative; it equals 1/(2L) exactly at ceil(T/2).
      const double half = std::ceil(T / 2.0);
      if (tt <= half) return cap;
      return 6.0 / (s.mu_B * (tt - half) + 12.0 * s.L);
    }
  }
  throw std::logic_error("unhandled schedule kind");
}

ExpectationParams sngd_step(const ExpectationParams& w, const DualVector& g, double gamma) {
  require_positive(gamma, "step size");
  require_finite(g);
  const NaturalParams eta = grad_A_star(w);
  const Vec lam = eta.lambda - gamma * g.g_xi;
  const Vec Lam = eta.Lambda - gamma * g.g_Xi;
  StandardParams p{Vec(w.dim()), Vec(w.dim())};
  for (std::size_t i = 0; i < w.dim(); ++i) {
    if (!(Lam[i] < 0.0)) {
      std::ostringstream os;
      os << "dual iterate left the natural domain: Lambda[" << i << "] = " << Lam[i] << " >= 0";
      throw BoundaryEscape(os.str());
    }
    p.sigma2[i] = -0.5 / Lam[i];
    p.mu[i] = p.sigma2[i] * lam[i];
    if (!(p.sigma2[i] > kBoundaryVariance) || !std::isfinite(p.sigma2[i]) || !std::isfinite(p.mu[i])) {
      std::ostringstream os;
      os << "variance collapsed at coordinate " << i << " (sigma^2 = " << p.sigma2[i] << ")";
      throw BoundaryEscape(os.str());
    }
  }
  return to_expectation(p);
}

ExpectationParams proj_sngd_step(const ExpectationParams& w, const DualVector& g, double gamma,
                                 const DomainBox& box) {
  require_positive(gamma, "step size");
  require_finite(g);
  if (w.dim() != box.d || g.dim() != box.d) throw DomainError("proj_sngd_step: dimension mismatch");
  const NaturalParams eta = grad_A_star(w);
  const Vec lam = eta.lambda - gamma * g.g_xi;
  const Vec Lam = eta.Lambda - gamma * g.g_Xi;
  StandardParams p{Vec(w.dim()), Vec(w.dim())};
  // Per coordinate: minimize -lam mu - Lam (mu^2 + s2) - 1/2 log s2 over the box.
  for (std::size_t i = 0; i < w.dim(); ++i) {
    if (Lam[i] < 0.0) {
      const double s2 = -0.5 / Lam[i];
      p.sigma2[i] = std::clamp(s2, box.var_lo(), box.var_hi());
      const double mu = lam[i] == 0.0 ? 0.0 : s2 * lam[i];
      p.mu[i] = std::clamp(mu, -box.U, box.U);
      continue;
    }
    // Escape: the s2-objective decreases on the whole interval, and the
    // mu-objective is concave (or linear), so both sit on the boundary.
    p.sigma2[i] = box.var_hi();
    if (lam[i] > 0.0) {
      p.mu[i] = box.U;
    } else if (lam[i] < 0.0) {
      p.mu[i] = -box.U;
    } else if (Lam[i] > 0.0) {
      p.mu[i] = w.xi[i] >= 0.0 ? box.U : -box.U;
    } else {
      p.mu[i] = std::clamp(w.xi[i], -box.U, box.U);
    }
  }
  return to_expectation(p);
}

CholeskyParams prox_sgd_step(const CholeskyParams& th, const CholeskyGradient& g, double gamma) {
  require_positive(gamma, "step size");
  validate(th);
  CholeskyParams out{th.mu - gamma * g.g_mu, th.c - gamma * g.g_c};
  for (Eigen::Index i = 0; i < out.c.size(); ++i) {
    const double cs = out.c[i];
    out.c[i] = 0.5 * (cs + std::sqrt(cs * cs + 4.0 * gamma));
  }
  return out;
}

CholeskyParams proj_sgd_step(const CholeskyParams& th, const CholeskyGradient& g, double gamma, double M) {
  require_positive(gamma, "step size");
  require_positive(M, "M");
  validate(th);
  CholeskyParams out{th.mu - gamma * g.g_mu, th.c - gamma * g.g_c};
  const double lo = 1.0 / std::sqrt(M);
  for (Eigen::Index i = 0; i < out.c.size(); ++i) out.c[i] = std::max(out.c[i], lo);
  return out;
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kSngd: return "sngd";
    case Algorithm::kProjSngd: return "proj_sngd";
    case Algorithm::kProxSgd: return "prox_sgd";
    case Algorithm::kProjSgd: return "proj_sgd";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::kSngd, Algorithm::kProjSngd, Algorithm::kProxSgd, Algorithm::kProjSgd}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(GradientKind k) {
  switch (k) {
    case GradientKind::kExact: return "exact";
    case GradientKind::kStochastic: return "stochastic";
    case GradientKind::kNoisyExact: return "noisy_exact";
  }
  return "unknown";
}

GradientKind parse_gradient_kind(std::string_view name) {
  for (auto k : {GradientKind::kExact, GradientKind::kStochastic, GradientKind::kNoisyExact}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown gradient kind '" + std::string(name) + "'");
}

std::size_t sample_output_index(const std::vector<double>& gammas, std::uint64_t seed, std::uint64_t draw) {
  if (gammas.empty()) return 0;
  CounterStream stream(seed, draw, StreamPurpose::kOutputIndex);
  std::discrete_distribution<std::size_t> pick(gammas.begin(), gammas.end());
  return pick(stream);
}

OptimizerTrace run(const LikelihoodModel& model, const ExpectationParams& w0, const RunOptions& opt) {
  opt.schedule.validate();
  if (opt.log_every == 0) throw std::invalid_argument("log_every must be positive");
  if (w0.dim() != model.d()) throw DomainError("initial point dimension does not match the data");
  validate(w0);
  const bool sgd = is_sgd_family(opt.algorithm);
  if (opt.algorithm == Algorithm::kProjSngd) {
    if (!opt.box) throw std::invalid_argument("proj_sngd needs a box");
    if (!opt.box->contains(w0)) throw std::invalid_argument("initial point lies outside the box");
  }
  if (opt.bfbe_rho && !opt.box) throw std::invalid_argument("BFBE logging needs a box");
  if (opt.box && opt.box->d != model.d()) throw std::invalid_argument("box dimension does not match the data");
  double M = 0.0;
  if (opt.algorithm == Algorithm::kProjSgd) {
    if (opt.proj_sgd_M) {
      M = *opt.proj_sgd_M;
    } else if (opt.box) {
      M = opt.box->D;
    } else {
      throw std::invalid_argument("proj_sgd needs M or a box");
    }
    require_positive(M, "M");
    if ((to_cholesky(w0).c.array() < 1.0 / std::sqrt(M) * (1.0 - 1e-12)).any())
      throw std::invalid_argument("initial Cholesky factor lies below 1/sqrt(M)");
  }
  const GradientSpec& gs = opt.gradient;
  const EstimatorConfig est{gs.batch_size, gs.mc_samples, opt.seed};
  if (gs.kind == GradientKind::kStochastic) est.validate(model.n());
  if (gs.kind == GradientKind::kNoisyExact && (!(gs.noise_V2 >= 0.0) || !std::isfinite(gs.noise_V2)))
    throw std::invalid_argument("noise variance must be nonnegative");

  OptimizerTrace trace;
  trace.algorithm = opt.algorithm;
  trace.gradient = gs.kind;
  trace.gammas.reserve(opt.T);
  for (std::size_t t = 0; t < opt.T; ++t) trace.gammas.push_back(step_size(opt.schedule, t));
  trace.output_index = sample_output_index(trace.gammas, opt.seed);
  const std::size_t snapshot_every = model.d() <= 4 ? 1 : 10;

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  auto diverge = [&](std::size_t t, const std::string& why) {
    TraceRow row;
    row.t = t;
    row.gamma = t < trace.gammas.size() ? trace.gammas[t] : std::numeric_limits<double>::quiet_NaN();
    row.elbo = row.grad_norm = std::numeric_limits<double>::quiet_NaN();
    row.elapsed_s = elapsed();
    trace.rows.push_back(row);
    trace.diverged = true;
    trace.divergence = why;
  };

  ExpectationParams w = w0;
  CholeskyParams th = to_cholesky(w0);
  for (std::size_t t = 0;; ++t) {
    if (sgd) w = from_cholesky(th);
    if (t == trace.output_index) trace.output_point = w;
    if (t % snapshot_every == 0 || t == opt.T) trace.snapshots.push_back({t, to_standard(w)});

    std::optional<GradientEstimate> exact;
    if (t % opt.log_every == 0 || t == opt.T) {
      const double value = elbo(w, model);
      exact = exact_grad(w, model);
      const double gn = exact->norm();
      if (!std::isfinite(value) || !std::isfinite(gn)) {
        diverge(t, "objective or gradient is not finite");
        break;
      }
      TraceRow row;
      row.t = t;
      row.gamma = t < trace.gammas.size() ? trace.gammas[t] : step_size(opt.schedule, t);
      row.elbo = value;
      row.grad_norm = gn;
      if (opt.bfbe_rho) row.bfbe = bfbe(w, *exact, *opt.bfbe_rho, *opt.box).value;
      row.elapsed_s = elapsed();
      trace.rows.push_back(row);
      if (opt.grad_tol && gn < *opt.grad_tol) break;
      if (opt.stop_below && value <= *opt.stop_below) break;
    }
    if (t == opt.T) break;

    const double gamma = trace.gammas[t];
    try {
      if (!sgd) {
        GradientEstimate g;
        if (gs.kind == GradientKind::kStochastic) {
          g = stoch_grad(w, model, est, t);
        } else {
          g = exact ? *exact : exact_grad(w, model);
          if (gs.kind == GradientKind::kNoisyExact) {
            add_noise(g.g_xi, g.g_Xi, gs.noise_V2, opt.seed, t);
            g.is_stochastic = true;
          }
        }
        w = opt.algorithm == Algorithm::kSngd ? sngd_step(w, g, gamma) : proj_sngd_step(w, g, gamma, *opt.box);
      } else {
        const bool entropy = opt.algorithm == Algorithm::kProjSgd;
        CholeskyGradient g = gs.kind == GradientKind::kStochastic ? stoch_grad_cholesky(th, model, est, t, entropy)
                                                                   : exact_grad_cholesky(th, model, entropy);
        if (gs.kind == GradientKind::kNoisyExact) add_noise(g.g_mu, g.g_c, gs.noise_V2, opt.seed, t);
        th = opt.algorithm == Algorithm::kProxSgd ? prox_sgd_step(th, g, gamma) : proj_sgd_step(th, g, gamma, M);
        if (!th.mu.allFinite() || !th.c.allFinite()) throw BoundaryEscape("non-finite iterate");
      }
    } catch (const DomainError& e) {
      trace.iterations = t + 1;
      diverge(t + 1, e.what());
      break;
    }
    trace.iterations = t + 1;
  }
  trace.final_point = sgd && !trace.diverged ? from_cholesky(th) : w;
  return trace;
}

}  // namespace ngvi
