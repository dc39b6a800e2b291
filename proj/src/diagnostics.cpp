#include "ngvi/diagnostics.hpp"

#include "ngvi/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace ngvi {

namespace {

double min_eigenvalue(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

// Extreme eigenvalues of the pencil (H, A) with A positive definite.
std::pair<double, double> generalized_extremes(const Eigen::MatrixXd& H, const Eigen::MatrixXd& A) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(H, A, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

std::vector<double> geometric(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    v[k] = n == 1 ? std::sqrt(lo * hi) : lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(n - 1));
  }
  return v;
}

std::vector<double> linear(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    v[k] = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  }
  return v;
}

// 1-D moments B = sum x^3 E[phi'''] and C = sum x^4 E[phi''''].
std::pair<double, double> univariate_BC(const ExpectationParams& w, const LikelihoodModel& model) {
  const auto mom = point_moments(to_standard(w), model, default_method(model.kind));
  double B = 0.0, C = 0.0;
  for (std::size_t i = 0; i < model.n(); ++i) {
    const double x = model.data.x(i, 0);
    B += x * x * x * mom[i][3];
    C += x * x * x * x * mom[i][4];
  }
  return {B, C};
}

}  // namespace

Eigen::MatrixXd hessian_loglik(const ExpectationParams& w, const LikelihoodModel& model) {
  const StandardParams p = to_standard(w);
  const auto mom = point_moments(p, model, default_method(model.kind));
  const Eigen::MatrixXd& X = model.data.x;
  const Eigen::MatrixXd X2 = X.cwiseAbs2();
  const std::size_t n = model.n();
  Vec e2(n), e3(n), e4(n);
  for (std::size_t i = 0; i < n; ++i) {
    e2[i] = mom[i][2];
    e3[i] = mom[i][3];
    e4[i] = mom[i][4];
  }
  // H_pq = sum x_p x_q E[phi''], B_pq = sum x_p x_q^2 E[phi'''],
  // C_pq = sum x_p^2 x_q^2 E[phi''''].
  const Eigen::MatrixXd H = X.transpose() * e2.asDiagonal() * X;
  const Eigen::MatrixXd B = X.transpose() * e3.asDiagonal() * X2;
  const Eigen::MatrixXd C = X2.transpose() * e4.asDiagonal() * X2;
  const Eigen::Index d = X.cols();
  const Vec& mu = p.mu;
  Eigen::MatrixXd out(2 * d, 2 * d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      double xx = -B(b, a) * mu[a] - B(a, b) * mu[b] + C(a, b) * mu[a] * mu[b];
      if (a != b) xx += H(a, b);
      out(2 * a, 2 * b) = xx;
      out(2 * a, 2 * b + 1) = 0.5 * (B(a, b) - C(a, b) * mu[a]);
      out(2 * a + 1, 2 * b) = 0.5 * (B(b, a) - C(b, a) * mu[b]);
      out(2 * a + 1, 2 * b + 1) = 0.25 * C(a, b);
    }
  }
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd hessian_elbo(const ExpectationParams& w, const LikelihoodModel& model) {
  return hessian_loglik(w, model) + hessian_A_star_dense(w);
}

std::vector<ExpectationParams> box_grid(const DomainBox& box, const GridSpec& spec, bool* sampled) {
  if (spec.points_per_axis == 0) throw std::invalid_argument("grid needs at least one point per axis");
  const std::size_t d = box.d;
  const double axis = static_cast<double>(spec.points_per_axis);
  const double total = std::pow(axis * axis, static_cast<double>(d));
  std::vector<ExpectationParams> grid;
  if (total <= static_cast<double>(spec.max_tensor_points)) {
    if (sampled) *sampled = false;
    const auto mus = linear(-box.U, box.U, spec.points_per_axis);
    const auto vars = geometric(box.var_lo(), box.var_hi(), spec.points_per_axis);
    const std::size_t per_coord = spec.points_per_axis * spec.points_per_axis;
    const auto count = static_cast<std::size_t>(total);
    grid.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      StandardParams p{Vec(d), Vec(d)};
      std::size_t rest = k;
      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t cell = rest % per_coord;
        rest /= per_coord;
        p.mu[i] = mus[cell / spec.points_per_axis];
        p.sigma2[i] = vars[cell % spec.points_per_axis];
      }
      grid.push_back(to_expectation(p));
    }
    return grid;
  }
  if (sampled) *sampled = true;
  CounterStream stream(spec.seed, 0, StreamPurpose::kInit);
  std::uniform_real_distribution<double> um(-box.U, box.U);
  std::uniform_real_distribution<double> ulv(std::log(box.var_lo()), std::log(box.var_hi()));
  grid.reserve(spec.random_samples);
  for (std::size_t k = 0; k < spec.random_samples; ++k) {
    StandardParams p{Vec(d), Vec(d)};
    for (std::size_t i = 0; i < d; ++i) {
      p.mu[i] = um(stream);
      p.sigma2[i] = std::exp(ulv(stream));
    }
    grid.push_back(to_expectation(p));
  }
  return grid;
}

SmoothnessCertificate certify_relative_smoothness(const LikelihoodModel& model, const DomainBox& box,
                                                  const GridSpec& grid, std::optional<std::pair<double, double>> ab) {
  if (box.d != model.d()) throw std::invalid_argument("box dimension does not match the data");
  SmoothnessCertificate cert;
  cert.grid = box_grid(box, grid, &cert.sampled);
  cert.coarse = !cert.sampled && grid.points_per_axis < 5;

  std::vector<Eigen::MatrixXd> hl(cert.grid.size()), ha(cert.grid.size());
  for (std::size_t k = 0; k < cert.grid.size(); ++k) {
    hl[k] = hessian_loglik(cert.grid[k], model);
    ha[k] = hessian_A_star_dense(cert.grid[k]);
  }

  if (ab) {
    cert.alpha = ab->first;
    cert.beta = ab->second;
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < cert.grid.size(); ++k) {
      const auto [a, b] = generalized_extremes(hl[k], ha[k]);
      lo = std::min(lo, a);
      hi = std::max(hi, b);
    }
    cert.alpha = lo + 1.0;
    cert.beta = hi + 1.0;
  }
  cert.alpha_loglik = cert.alpha - 1.0;
  cert.beta_loglik = cert.beta - 1.0;

  cert.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cert.grid.size(); ++k) {
    const Eigen::MatrixXd full = hl[k] + ha[k];
    cert.min_slack = std::min({cert.min_slack, min_eigenvalue(cert.beta * ha[k] - full),
                               min_eigenvalue(full - cert.alpha * ha[k])});
  }

  if (model.d() == 1) {
    IffAgreement upper = check_univariate_iff(model, cert.grid, cert.beta_loglik, true);
    const IffAgreement lower = check_univariate_iff(model, cert.grid, cert.alpha_loglik, false);
    upper.points += lower.points;
    upper.disagreements += lower.disagreements;
    cert.iff = upper;
  }
  return cert;
}

IffTerms univariate_iff_terms(const ExpectationParams& w, const LikelihoodModel& model, double param, bool upper) {
  if (model.d() != 1) throw std::invalid_argument("univariate conditions need d = 1");
  const auto [B, C] = univariate_BC(w, model);
  const StandardParams p = to_standard(w);
  const double mu = p.mu[0], s2 = p.sigma2[0];
  const double s4 = s2 * s2;
  const double sign = upper ? 1.0 : -1.0;
  IffTerms t;
  t.first = sign * (2.0 * param - s4 * C);
  t.second = sign * (param / s2 + 2.0 * mu * mu * param / s4 - (-2.0 * mu * B + mu * mu * C));
  t.third = param * param / (2.0 * s4 * s2) - C * param / (4.0 * s2) - B * B / 4.0;
  return t;
}

IffAgreement check_univariate_iff(const LikelihoodModel& model, const std::vector<ExpectationParams>& grid,
                                  double param, bool upper, double tol) {
  IffAgreement out;
  for (const auto& w : grid) {
    const Eigen::MatrixXd hl = hessian_loglik(w, model);
    const Eigen::MatrixXd ha = hessian_A_star_dense(w);
    const double slack = min_eigenvalue(upper ? Eigen::MatrixXd(param * ha - hl) : Eigen::MatrixXd(hl - param * ha));
    const IffTerms terms = univariate_iff_terms(w, model, param, upper);
    const double closest = std::min({std::abs(terms.first), std::abs(terms.second), std::abs(terms.third)});
    ++out.points;
    if ((slack >= 0.0) != terms.holds() && std::abs(slack) > tol && closest > tol) ++out.disagreements;
  }
  return out;
}

SufficientConstants sufficient_constants(ModelKind kind, const Dataset& data, const DomainBox& box,
                                         double noise_variance) {
  SufficientConstants out;
  const double d = static_cast<double>(data.d());
  switch (kind) {
    case ModelKind::kPoisson:
      throw std::invalid_argument("no sufficient smoothness constants are available for the Poisson model");
    case ModelKind::kLinear:
      out.L1 = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        const double m = data.x.row(i).cwiseAbs().maxCoeff();
        out.L2 += m * m / noise_variance;
      }
      out.beta = 0.0;
      return out;
    case ModelKind::kLogistic:
      for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        const double m = data.x.row(i).cwiseAbs().maxCoeff();
        out.L1 += m;
        out.L2 += m * m / 4.0;
      }
      if (data.d() == 1) {
        out.beta = box.D * out.L2 / 2.0 + std::sqrt(2.0 * box.D) * out.L1 / 2.0;
      } else {
        out.beta = d * box.D * box.D * (box.U + box.D) * (out.L1 + box.U * out.L2);
        out.heuristic = true;
      }
      return out;
  }
  throw std::logic_error("unhandled model kind");
}

Moduli moduli(const DomainBox& box) {
  Moduli m;
  const double U2 = box.U * box.U, D = box.D;
  m.mu_C = 1.0 / std::sqrt(4.0 * U2 + 4.0 * D + 1.0);
  m.mu_H = 1.0;
  m.C_S = 1.0 / (D * (4.0 * U2 + 2.0 * D + 1.0));
  m.C_L = 9.0 * U2 * D * D / 2.0;
  m.mu_B = m.mu_C * m.mu_C / (9.0 * U2 * D * D);
  m.box = box;
  return m;
}

BFBEResult bfbe(const ExpectationParams& w, double rho, const LikelihoodModel& model, const DomainBox& box) {
  return bfbe(w, exact_grad(w, model), rho, box);
}

BFBEResult bfbe(const ExpectationParams& w, const DualVector& grad, double rho, const DomainBox& box) {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  BFBEResult r;
  r.rho = rho;
  r.minimizer = proj_sngd_step(w, grad, 1.0 / rho, box);
  const ExpectationParams delta = difference(r.minimizer, w);
  const double inner_obj = inner(grad, delta) + rho * kl_gaussian(r.minimizer, w);
  r.value = std::max(0.0, -2.0 * rho * inner_obj);
  return r;
}

double pl_residual(const ExpectationParams& w, const LikelihoodModel& model, const DomainBox& box, double ell_star) {
  const StandardParams p = to_standard(w);
  for (std::size_t i = 0; i < p.dim(); ++i) {
    if (!(std::abs(p.mu[i]) < box.U && p.sigma2[i] > box.var_lo() && p.sigma2[i] < box.var_hi()))
      throw DomainError("pl_residual needs a point strictly inside the box");
  }
  const double mu_C = moduli(box).mu_C;
  return exact_grad(w, model).squared_norm() - 2.0 * mu_C * mu_C * (elbo(w, model) - ell_star);
}

bool assumption2_linear1d(double x, double y, double U, double D) {
  const double a = x * x + 1.0;
  return -U * a < x * y && x * y < U * a && 1.0 / D < a && a < D;
}

DescentReport descent_audit(const OptimizerTrace& trace, double L, double tol) {
  if (trace.gradient != GradientKind::kExact) throw std::invalid_argument("descent audit needs an exact-gradient trace");
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
  for (double g : trace.gammas) {
    if (g > (1.0 / L) * (1.0 + 1e-12)) throw std::invalid_argument("trace uses a step size above 1/L");
  }
  DescentReport report;
  for (std::size_t k = 1; k < trace.rows.size(); ++k) {
    const double inc = trace.rows[k].elbo - trace.rows[k - 1].elbo;
    if (!(inc <= tol)) {
      report.violations.push_back(trace.rows[k].t);
      report.max_increase = std::isnan(inc) ? inc : std::max(report.max_increase, inc);
    }
  }
  return report;
}

CoercivityReport coercivity_scan(const LikelihoodModel& model, CoercivityPath path) {
  const std::size_t d = model.d();
  CoercivityReport r;
  switch (path) {
    case CoercivityPath::kMuRay: r.radii = geometric(1.0, 100.0, 20); break;
    case CoercivityPath::kSigmaToZero: r.radii = geometric(1.0, 1e-6, 20); break;
    case CoercivityPath::kSigmaToInf: r.radii = geometric(1.0, 1e3, 20); break;
  }
  for (double rad : r.radii) {
    StandardParams p{Vec::Zero(d), Vec::Ones(d)};
    if (path == CoercivityPath::kMuRay) {
      p.mu = Vec::Constant(d, rad / std::sqrt(static_cast<double>(d)));
    } else {
      p.sigma2 = Vec::Constant(d, rad);
    }
    r.values.push_back(elbo(to_expectation(p), model, Quadrature{}));
  }
  r.tail_increasing = true;
  for (std::size_t k = r.values.size() - 10; k < r.values.size(); ++k) {
    if (!(r.values[k] > r.values[k - 1])) r.tail_increasing = false;
  }
  return r;
}

SteinCheck stein_bound_check(const LikelihoodModel& model, const ExpectationParams& w, std::size_t i, std::size_t j) {
  if (model.kind != ModelKind::kLogistic)
    throw std::invalid_argument("the Stein bound check needs a bounded first derivative (logistic model)");
  if (i >= model.d() || j >= model.d()) throw std::out_of_range("coordinate index out of range");
  const StandardParams p = to_standard(w);
  const auto mom = point_moments(p, model, default_method(model.kind));
  SteinCheck c;
  double third = 0.0, sup = 0.0;
  for (std::size_t k = 0; k < model.n(); ++k) {
    const double xi = model.data.x(k, i), xj = model.data.x(k, j);
    third += xi * xj * xj * mom[k][3];
    sup += std::abs(xi);
  }
  c.lhs = std::abs(third);
  c.rhs = sup / p.sigma2[j];
  return c;
}

OptimumEstimate optimal_value(const LikelihoodModel& model, const DomainBox& box, const ExpectationParams& w0,
                              double gamma, std::size_t max_iter, double tol) {
  if (!(gamma > 0.0)) throw std::invalid_argument("step size must be positive");
  OptimumEstimate out;
  ExpectationParams w = project_box(w0, box);
  for (std::size_t t = 0; t < max_iter; ++t) {
    const ExpectationParams next = proj_sngd_step(w, exact_grad(w, model), gamma, box);
    const ExpectationParams delta = difference(next, w);
    out.step_norm = std::sqrt(delta.xi.squaredNorm() + delta.Xi.squaredNorm()) / gamma;
    w = next;
    out.iterations = t + 1;
    if (out.step_norm < tol) {
      out.converged = true;
      break;
    }
  }
  out.point = w;
  out.ell_star = elbo(w, model);
  return out;
}

}  // namespace ngvi
