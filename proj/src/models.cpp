#include "ngvi/models.hpp"

#include "ngvi/quadrature.hpp"
#include "ngvi/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ngvi {

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void require_dim(const LikelihoodModel& model, std::size_t d, const char* what) {
  if (model.d() != d) {
    std::ostringstream os;
    os << what << ": parameter dimension " << d << " does not match data dimension " << model.d();
    throw DomainError(os.str());
  }
}

// Per-point mean and variance of s_i = x_i^T z under q.
struct Projection {
  Vec mean;
  Vec var;
};

Projection project(const StandardParams& p, const Eigen::MatrixXd& x) {
  return {x * p.mu, x.cwiseAbs2() * p.sigma2};
}

// sum_i x_ij E_i[phi'] and sum_i x_ij^2 E_i[phi''].
struct FirstSecond {
  Vec first;
  Vec second;
};

FirstSecond exact_sums(const StandardParams& p, const LikelihoodModel& model, const ExpectationMethod& method) {
  const auto mom = point_moments(p, model, method);
  const std::size_t n = model.n();
  Vec e1(n), e2(n);
  for (std::size_t i = 0; i < n; ++i) {
    e1[i] = mom[i][1];
    e2[i] = mom[i][2];
  }
  return {model.data.x.transpose() * e1, model.data.x.cwiseAbs2().transpose() * e2};
}

// Mini-batch Monte-Carlo version of exact_sums, scaled by n / (m N).
FirstSecond sampled_sums(const StandardParams& p, const LikelihoodModel& model, const EstimatorConfig& cfg,
                         std::uint64_t iteration) {
  cfg.validate(model.n());
  const std::size_t n = model.n();
  const std::size_t d = model.d();
  const std::size_t m = cfg.batch_size;
  const std::size_t N = cfg.mc_samples;

  CounterStream idx_stream(cfg.seed, iteration, StreamPurpose::kBatchIndex);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Eigen::MatrixXd xb(m, d);
  Vec yb(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = pick(idx_stream);
    xb.row(k) = model.data.x.row(i);
    yb[k] = model.data.y[i];
  }

  CounterStream z_stream(cfg.seed, iteration, StreamPurpose::kLatentSample);
  std::normal_distribution<double> normal;
  const Vec sd = p.sigma2.cwiseSqrt();
  Eigen::MatrixXd z(d, N);
  for (std::size_t l = 0; l < N; ++l) {
    for (std::size_t j = 0; j < d; ++j) z(j, l) = p.mu[j] + sd[j] * normal(z_stream);
  }

  const Eigen::MatrixXd s = xb * z;
  Vec r1 = Vec::Zero(m), r2 = Vec::Zero(m);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t l = 0; l < N; ++l) {
      const auto der = point_loss_derivatives(model, yb[k], s(k, l));
      r1[k] += der[1];
      r2[k] += der[2];
    }
  }
  const double scale = static_cast<double>(n) / (static_cast<double>(m) * static_cast<double>(N));
  return {scale * (xb.transpose() * r1), scale * (xb.cwiseAbs2().transpose() * r2)};
}

GradientEstimate assemble_omega_grad(const ExpectationParams& w, const FirstSecond& fs, bool stochastic) {
  GradientEstimate g = kl_term_grad(w);
  g.g_xi += fs.first - w.xi.cwiseProduct(fs.second);
  g.g_Xi += 0.5 * fs.second;
  g.is_stochastic = stochastic;
  return g;
}

CholeskyGradient assemble_cholesky_grad(const CholeskyParams& th, const FirstSecond& fs, bool include_entropy) {
  CholeskyGradient g{fs.first + th.mu, th.c.cwiseProduct(fs.second) + th.c};
  if (include_entropy) g.g_c -= th.c.cwiseInverse();
  return g;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinear: return "linear";
    case ModelKind::kLogistic: return "logistic";
    case ModelKind::kPoisson: return "poisson";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "linear") return ModelKind::kLinear;
  if (name == "logistic") return ModelKind::kLogistic;
  if (name == "poisson") return ModelKind::kPoisson;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

LikelihoodModel LikelihoodModel::make(ModelKind kind, Dataset data, double noise_variance) {
  if (data.n() == 0 || data.d() == 0) throw std::invalid_argument("dataset is empty");
  if (static_cast<std::size_t>(data.y.size()) != data.n())
    throw std::invalid_argument("dataset: label count does not match feature rows");
  if (!data.x.allFinite()) throw std::invalid_argument("dataset: non-finite feature");
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
    throw std::invalid_argument("noise variance must be positive");
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    const double y = data.y[i];
    bool ok = std::isfinite(y);
    if (kind == ModelKind::kLogistic) ok = ok && (y == 1.0 || y == -1.0);
    if (kind == ModelKind::kPoisson) ok = ok && y >= 0.0 && y == std::floor(y);
    if (!ok) {
      std::ostringstream os;
      os << "label " << y << " at row " << i << " is outside the domain of the " << to_string(kind) << " model";
      throw std::invalid_argument(os.str());
    }
  }
  return LikelihoodModel{kind, std::move(data), noise_variance};
}

ScalarDerivatives point_loss_derivatives(const LikelihoodModel& model, double y, double s) {
  switch (model.kind) {
    case ModelKind::kLinear: {
      const double v = model.noise_variance;
      const double r = s - y;
      return {0.5 * r * r / v + 0.5 * std::log(2.0 * std::numbers::pi * v), r / v, 1.0 / v, 0.0, 0.0};
    }
    case ModelKind::kLogistic: {
      const double t = y * s;
      const double u = sigmoid(-t);
      const double uu = u * (1.0 - u);
      return {softplus(-t), -y * u, uu, -y * uu * (1.0 - 2.0 * u), uu * (1.0 - 6.0 * u + 6.0 * u * u)};
    }
    case ModelKind::kPoisson: {
      const double e = std::exp(s);
      return {e - y * s + std::lgamma(y + 1.0), e - y, e, e, e};
    }
  }
  throw std::logic_error("unhandled model kind");
}

void EstimatorConfig::validate(std::size_t n) const {
  if (batch_size < 1 || batch_size > n) throw std::invalid_argument("batch size must satisfy 1 <= m <= n");
  if (mc_samples < 1) throw std::invalid_argument("need at least one Monte-Carlo sample");
}

ExpectationMethod default_method(ModelKind kind) {
  if (kind == ModelKind::kLogistic) return Quadrature{kDefaultHermiteNodes};
  return ClosedForm{};
}

std::vector<LossMoments> point_moments(const StandardParams& p, const LikelihoodModel& model,
                                       const ExpectationMethod& method) {
  require_dim(model, p.dim(), "point_moments");
  const Projection proj = project(p, model.data.x);
  const std::size_t n = model.n();
  std::vector<LossMoments> out(n);

  if (std::holds_alternative<ClosedForm>(method)) {
    for (std::size_t i = 0; i < n; ++i) {
      const double m = proj.mean[i];
      const double v = proj.var[i];
      const double y = model.data.y[i];
      switch (model.kind) {
        case ModelKind::kLinear: {
          const double nv = model.noise_variance;
          out[i] = {0.5 * ((m - y) * (m - y) + v) / nv + 0.5 * std::log(2.0 * std::numbers::pi * nv), (m - y) / nv,
                    1.0 / nv, 0.0, 0.0};
          break;
        }
        case ModelKind::kPoisson: {
          const double e = std::exp(m + 0.5 * v);
          out[i] = {e - y * m + std::lgamma(y + 1.0), e - y, e, e, e};
          break;
        }
        case ModelKind::kLogistic:
          throw std::invalid_argument("closed-form expectations are unavailable for the logistic model");
      }
    }
    return out;
  }

  if (const auto* q = std::get_if<Quadrature>(&method)) {
    const GaussHermite& rule = GaussHermite::rule(q->nodes);
    const auto& nodes = rule.nodes();
    const auto& weights = rule.weights();
    for (std::size_t i = 0; i < n; ++i) {
      const double y = model.data.y[i];
      const double scale = std::sqrt(2.0 * std::max(proj.var[i], 0.0));
      LossMoments acc{};
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto der = point_loss_derivatives(model, y, proj.mean[i] + scale * nodes[k]);
        for (std::size_t r = 0; r < 5; ++r) acc[r] += weights[k] * der[r];
      }
      out[i] = acc;
    }
    return out;
  }

  const auto& mc = std::get<MonteCarlo>(method);
  if (mc.samples == 0) throw std::invalid_argument("Monte-Carlo method needs at least one sample");
  CounterStream stream(mc.seed, 0, StreamPurpose::kLatentSample);
  std::normal_distribution<double> normal;
  const Vec sd = p.sigma2.cwiseSqrt();
  Vec z(p.dim());
  for (std::size_t l = 0; l < mc.samples; ++l) {
    for (std::size_t j = 0; j < p.dim(); ++j) z[j] = p.mu[j] + sd[j] * normal(stream);
    const Vec s = model.data.x * z;
    for (std::size_t i = 0; i < n; ++i) {
      const auto der = point_loss_derivatives(model, model.data.y[i], s[i]);
      for (std::size_t r = 0; r < 5; ++r) out[i][r] += der[r];
    }
  }
  for (auto& row : out)
    for (double& v : row) v /= static_cast<double>(mc.samples);
  return out;
}

double neg_loglik(const LikelihoodModel& model, const Vec& z) {
  require_dim(model, static_cast<std::size_t>(z.size()), "neg_loglik");
  if (!z.allFinite()) throw DomainError("neg_loglik: non-finite latent vector");
  const Vec s = model.data.x * z;
  double total = 0.0;
  for (std::size_t i = 0; i < model.n(); ++i) total += point_loss_derivatives(model, model.data.y[i], s[i])[0];
  return total;
}

GradientEstimate kl_term_grad(const ExpectationParams& w) {
  const Vec var = variances(w);
  GradientEstimate g;
  g.g_xi = w.xi.cwiseQuotient(var);
  g.g_Xi = (0.5 * (Vec::Ones(var.size()) - var.cwiseInverse())).eval();
  return g;
}

double expected_neg_loglik(const ExpectationParams& w, const LikelihoodModel& model,
                           const ExpectationMethod& method) {
  const auto mom = point_moments(to_standard(w), model, method);
  double total = 0.0;
  for (const auto& m : mom) total += m[0];
  return total;
}

double elbo(const ExpectationParams& w, const LikelihoodModel& model, const ExpectationMethod& method) {
  return expected_neg_loglik(w, model, method) + kl_to_standard_normal(w);
}

double elbo(const ExpectationParams& w, const LikelihoodModel& model) {
  return elbo(w, model, default_method(model.kind));
}

GradientEstimate exact_grad(const ExpectationParams& w, const LikelihoodModel& model) {
  return exact_grad(w, model, default_method(model.kind));
}

GradientEstimate exact_grad(const ExpectationParams& w, const LikelihoodModel& model,
                            const ExpectationMethod& method) {
  return assemble_omega_grad(w, exact_sums(to_standard(w), model, method), false);
}

GradientEstimate stoch_grad(const ExpectationParams& w, const LikelihoodModel& model, const EstimatorConfig& cfg,
                            std::uint64_t iteration) {
  return assemble_omega_grad(w, sampled_sums(to_standard(w), model, cfg, iteration), true);
}

double variance_bound_logistic(const Dataset& data, const DomainBox& box, std::size_t batch_size) {
  if (data.n() == 0) throw std::invalid_argument("variance bound: empty dataset");
  if (batch_size < 1 || batch_size > data.n()) throw std::invalid_argument("batch size must satisfy 1 <= m <= n");
  double s1 = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    s1 = std::max(s1, data.x.row(i).norm());
    s2 = std::max(s2, data.x.row(i).cwiseAbs2().norm());
  }
  const double n = static_cast<double>(data.n());
  const double a = s1 + box.U * s2 / 4.0;
  return 16.0 * n * n * (a * a + s2 * s2 / 64.0);
}

double cholesky_objective(const CholeskyParams& th, const LikelihoodModel& model, bool include_entropy) {
  validate(th);
  const StandardParams p{th.mu, th.c.cwiseAbs2()};
  const auto mom = point_moments(p, model, default_method(model.kind));
  double total = 0.0;
  for (const auto& m : mom) total += m[0];
  const double d = static_cast<double>(th.dim());
  total += 0.5 * (th.mu.squaredNorm() + th.c.squaredNorm()) + 0.5 * d * std::log(2.0 * std::numbers::pi);
  if (include_entropy) total -= th.c.array().log().sum() + 0.5 * d * (std::log(2.0 * std::numbers::pi) + 1.0);
  return total;
}

CholeskyGradient exact_grad_cholesky(const CholeskyParams& th, const LikelihoodModel& model, bool include_entropy) {
  validate(th);
  const StandardParams p{th.mu, th.c.cwiseAbs2()};
  return assemble_cholesky_grad(th, exact_sums(p, model, default_method(model.kind)), include_entropy);
}

CholeskyGradient stoch_grad_cholesky(const CholeskyParams& th, const LikelihoodModel& model,
                                     const EstimatorConfig& cfg, std::uint64_t iteration, bool include_entropy) {
  validate(th);
  const StandardParams p{th.mu, th.c.cwiseAbs2()};
  return assemble_cholesky_grad(th, sampled_sums(p, model, cfg, iteration), include_entropy);
}

}  // namespace ngvi
