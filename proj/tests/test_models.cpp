#include "ngvi/models.hpp"
#include "ngvi/rng.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace ngvi;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

LikelihoodModel one_point(ModelKind kind, Eigen::RowVectorXd x, double y) {
  Dataset data{Eigen::MatrixXd(x), Vec::Constant(1, y)};
  return LikelihoodModel::make(kind, std::move(data));
}

LikelihoodModel one_point(ModelKind kind, double x, double y) {
  return one_point(kind, Eigen::RowVectorXd::Constant(1, x), y);
}

LikelihoodModel small_logistic(std::size_t d) {
  Eigen::MatrixXd x(3, d);
  Vec y(3);
  if (d == 1) {
    x << 1.0, -0.6, 1.7;
  } else {
    x << 1.0, 0.3, -0.6, 0.8, 1.2, -0.4;
  }
  y << 1, -1, 1;
  return LikelihoodModel::make(ModelKind::kLogistic, {x, y});
}

LikelihoodModel small_poisson(std::size_t d) {
  Eigen::MatrixXd x(2, d);
  Vec y(2);
  if (d == 1) {
    x << 0.9, -0.3;
  } else {
    x << 0.9, 0.2, -0.3, 0.5;
  }
  y << 24, 1;
  return LikelihoodModel::make(ModelKind::kPoisson, {x, y});
}

ExpectationParams point(std::initializer_list<double> mu, std::initializer_list<double> s2) {
  Vec m(mu.size()), s(s2.size());
  std::size_t i = 0;
  for (double v : mu) m[i++] = v;
  i = 0;
  for (double v : s2) s[i++] = v;
  return to_expectation({m, s});
}

Vec flat_exact(const ExpectationParams& w, const LikelihoodModel& model) { return flatten(exact_grad(w, model)); }

}  // namespace

TEST(NegLogLik, SpecExamples) {
  EXPECT_NEAR(neg_loglik(one_point(ModelKind::kLogistic, 0.0, 1.0), v1(3.0)), std::log(2.0), 1e-15);
  EXPECT_NEAR(neg_loglik(one_point(ModelKind::kLogistic, 0.0, -1.0), v1(-7.0)), std::log(2.0), 1e-15);
  EXPECT_NEAR(neg_loglik(one_point(ModelKind::kLinear, 1.0, 1.0), v1(1.0)), 0.5 * std::log(2 * std::numbers::pi),
              1e-15);
  EXPECT_DOUBLE_EQ(neg_loglik(one_point(ModelKind::kPoisson, 1.0, 0.0), v1(0.0)), 1.0);
}

TEST(NegLogLik, LogisticIsStableForLargeMargins) {
  const auto m = one_point(ModelKind::kLogistic, 1.0, 1.0);
  EXPECT_NEAR(neg_loglik(m, v1(-800.0)), 800.0, 1e-9);
  EXPECT_NEAR(neg_loglik(m, v1(800.0)), 0.0, 1e-300);
}

TEST(Model, RejectsBadLabels) {
  EXPECT_THROW(one_point(ModelKind::kLogistic, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(one_point(ModelKind::kPoisson, 1.0, -1.0), std::invalid_argument);
  EXPECT_THROW(one_point(ModelKind::kPoisson, 1.0, 1.5), std::invalid_argument);
  EXPECT_THROW(LikelihoodModel::make(ModelKind::kLinear, {Eigen::MatrixXd(0, 1), Vec(0)}), std::invalid_argument);
  EXPECT_THROW(parse_model_kind("probit"), std::invalid_argument);
}

TEST(Derivatives, MatchFiniteDifferences) {
  for (auto kind : {ModelKind::kLinear, ModelKind::kLogistic, ModelKind::kPoisson}) {
    const double y = kind == ModelKind::kPoisson ? 3.0 : 1.0;
    const auto model = one_point(kind, 1.0, y);
    for (double s : {-2.3, -0.4, 0.0, 0.7, 1.9}) {
      for (int order = 0; order < 4; ++order) {
        auto f = [&](const Vec& v) { return point_loss_derivatives(model, y, v[0])[order]; };
        const double fd = oracle::fd_gradient(f, v1(s), 1e-5)[0];
        const double an = point_loss_derivatives(model, y, s)[order + 1];
        EXPECT_NEAR(fd, an, 1e-7 * std::max(1.0, std::abs(an))) << to_string(kind) << " order " << order + 1;
      }
    }
  }
}

TEST(KlTermGrad, Examples) {
  auto g = kl_term_grad({v1(0), v1(1)});
  EXPECT_DOUBLE_EQ(g.g_xi[0], 0.0);
  EXPECT_DOUBLE_EQ(g.g_Xi[0], 0.0);
  g = kl_term_grad({v1(1), v1(3)});
  EXPECT_DOUBLE_EQ(g.g_xi[0], 0.5);
  EXPECT_DOUBLE_EQ(g.g_Xi[0], 0.25);
  EXPECT_FALSE(g.is_stochastic);
}

TEST(KlTermGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.3, 3.0);
  for (int k = 0; k < 20; ++k) {
    const auto w = point({u(rng) - 1.5, u(rng)}, {u(rng), u(rng)});
    const Vec fd = oracle::fd_gradient(
        [](const Vec& f) { return kl_to_standard_normal(unflatten_expectation(f)); }, flatten(w));
    EXPECT_LT((fd - flatten(kl_term_grad(w))).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Elbo, LinearClosedFormExample) {
  const auto model = one_point(ModelKind::kLinear, 1.0, 0.0);
  const ExpectationParams w{v1(0), v1(1)};
  const double expected = 0.5 + 0.5 * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(elbo(w, model, ClosedForm{}), expected, 1e-14);
  EXPECT_NEAR(elbo(w, model, Quadrature{}), expected, 1e-12);
}

TEST(Elbo, PoissonClosedFormMatchesIntegration) {
  const auto model = one_point(ModelKind::kPoisson, 1.0, 0.0);
  const ExpectationParams w{v1(0), v1(1)};
  EXPECT_NEAR(elbo(w, model, ClosedForm{}), std::sqrt(std::exp(1.0)), 1e-14);
  EXPECT_NEAR(elbo(w, model, Quadrature{}), std::sqrt(std::exp(1.0)), 1e-12);
  EXPECT_NEAR(oracle::gaussian_expectation([](double s) { return std::exp(s); }, 0.0, 1.0), std::sqrt(std::exp(1.0)),
              1e-10);
}

TEST(Elbo, PoissonClosedFormEqualsQuadratureOnGrid) {
  const auto model = one_point(ModelKind::kPoisson, 0.9, 24.0);
  const auto box = DomainBox::make(4, 25, 1);
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < 4; ++b) {
      const double mu = -box.U + 2 * box.U * a / 4.0;
      const double s2 = std::exp(std::log(box.var_lo()) + (std::log(box.var_hi()) - std::log(box.var_lo())) * b / 3.0);
      const auto w = point({mu}, {s2});
      const double cf = elbo(w, model, ClosedForm{});
      EXPECT_NEAR(elbo(w, model, Quadrature{}), cf, 1e-8 * std::max(1.0, std::abs(cf))) << mu << " " << s2;
    }
  }
}

TEST(Elbo, QuadratureAgreesWithMonteCarlo) {
  const auto model = small_logistic(1);
  const auto w = point({0.4}, {1.3});
  const double quad = elbo(w, model, Quadrature{});
  const std::size_t N = 1000000;
  // Standard error from the per-sample spread of f(z).
  CounterStream stream(5, 0, StreamPurpose::kLatentSample);
  std::normal_distribution<double> normal;
  double s = 0, ss = 0;
  for (std::size_t l = 0; l < N; ++l) {
    const double f = neg_loglik(model, v1(0.4 + std::sqrt(1.3) * normal(stream)));
    s += f;
    ss += f * f;
  }
  const double mean = s / N;
  const double se = std::sqrt((ss / N - mean * mean) / N);
  const double mc = elbo(w, model, MonteCarlo{N, 5});
  EXPECT_NEAR(mc, mean + kl_to_standard_normal(w), 1e-9);
  EXPECT_LT(std::abs(mc - quad), 3 * se);
}

TEST(Elbo, QuadratureStableUnderNodeDoubling) {
  const auto model = small_logistic(2);
  const auto w = point({0.5, -1.0}, {2.0, 0.3});
  EXPECT_NEAR(elbo(w, model, Quadrature{100}), elbo(w, model, Quadrature{200}), 1e-10);
}

TEST(Elbo, ClosedFormRejectedForLogistic) {
  EXPECT_THROW(elbo(point({0}, {1}), small_logistic(1), ClosedForm{}), std::invalid_argument);
}

TEST(ExactGrad, LinearSpecExample) {
  const auto g = exact_grad(point({0.5}, {1.0}), one_point(ModelKind::kLinear, 1.0, 1.0));
  EXPECT_NEAR(g.g_xi[0], -0.5, 1e-14);
  EXPECT_NEAR(g.g_Xi[0], 0.5, 1e-14);
}

TEST(ExactGrad, LinearStationaryPoint) {
  for (double x : {0.5, 1.0, 2.0}) {
    for (double y : {-1.0, 0.3, 2.0}) {
      const auto g = exact_grad(point({x * y / (x * x + 1)}, {1 / (x * x + 1)}), one_point(ModelKind::kLinear, x, y));
      EXPECT_LT(g.norm(), 1e-13);
    }
  }
}

TEST(ExactGrad, MatchesFiniteDifferencesLogisticAndPoisson) {
  for (std::size_t d : {1u, 2u}) {
    for (const auto& model : {small_logistic(d), small_poisson(d)}) {
      const auto w = d == 1 ? point({0.3}, {0.7}) : point({0.3, -0.5}, {0.7, 1.4});
      const Vec fd = oracle::fd_gradient(
          [&](const Vec& f) { return elbo(unflatten_expectation(f), model, Quadrature{}); }, flatten(w), 1e-5);
      const Vec an = flat_exact(w, model);
      EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, an.cwiseAbs().maxCoeff()))
          << to_string(model.kind) << " d=" << d << "\n" << fd.transpose() << "\n" << an.transpose();
    }
  }
}

TEST(ExactGrad, BonnetIdentityLogistic1d) {
  const auto model = small_logistic(1);
  for (double mu : {-1.0, 0.2, 1.5}) {
    const double s2 = 0.8;
    auto ef = [&](const Vec& m) { return expected_neg_loglik(point({m[0]}, {s2}), model, Quadrature{}); };
    const double fd = oracle::fd_gradient(ef, v1(mu))[0];
    const auto mom = point_moments({v1(mu), v1(s2)}, model, Quadrature{});
    double bonnet = 0;
    for (Eigen::Index i = 0; i < 3; ++i) bonnet += model.data.x(i, 0) * mom[i][1];
    EXPECT_NEAR(fd, bonnet, 1e-6);
  }
}

TEST(StochGrad, DeterministicGivenSeed) {
  const auto model = small_logistic(2);
  const auto w = point({0.1, 0.2}, {0.5, 1.5});
  const EstimatorConfig cfg{2, 3, 99};
  const auto a = stoch_grad(w, model, cfg, 4);
  const auto b = stoch_grad(w, model, cfg, 4);
  EXPECT_TRUE(a.is_stochastic);
  EXPECT_EQ(flatten(a), flatten(b));
  EXPECT_NE(flatten(a), flatten(stoch_grad(w, model, cfg, 5)));
}

TEST(StochGrad, LinearFullBatchOnlyLatentNoise) {
  // m = n = 1: the index is fixed and only z is random; the Xi-part of the
  // linear gradient does not depend on z at all.
  const auto model = one_point(ModelKind::kLinear, 1.5, 0.5);
  const auto w = point({0.2}, {0.9});
  const auto exact = exact_grad(w, model);
  const auto g = stoch_grad(w, model, {1, 10, 1}, 0);
  EXPECT_NEAR(g.g_Xi[0], exact.g_Xi[0], 1e-14);
}

TEST(StochGrad, UnbiasedLogistic1d) {
  const auto model = small_logistic(1);
  const auto w = point({0.3}, {0.8});
  const auto exact = exact_grad(w, model);
  const int R = 100000;
  Eigen::Vector2d s = Eigen::Vector2d::Zero(), ss = Eigen::Vector2d::Zero();
  for (int r = 0; r < R; ++r) {
    const Vec g = flatten(stoch_grad(w, model, {1, 1, 42}, r));
    s += g;
    ss += g.cwiseAbs2();
  }
  const Eigen::Vector2d mean = s / R;
  const Eigen::Vector2d se = ((ss / R - mean.cwiseAbs2()) / R).cwiseSqrt();
  const Vec ex = flatten(exact);
  for (int k = 0; k < 2; ++k) EXPECT_LT(std::abs(mean[k] - ex[k]), 3 * se[k]) << k;
}

TEST(StochGrad, RejectsInvalidConfig) {
  const auto model = small_logistic(1);
  EXPECT_THROW(stoch_grad(point({0}, {1}), model, {0, 1, 0}), std::invalid_argument);
  EXPECT_THROW(stoch_grad(point({0}, {1}), model, {4, 1, 0}), std::invalid_argument);
  EXPECT_THROW(stoch_grad(point({0}, {1}), model, {1, 0, 0}), std::invalid_argument);
}

TEST(VarianceBound, Examples) {
  const auto box = DomainBox::make(1, 2, 1);
  Dataset data{Eigen::MatrixXd::Constant(1, 1, 1.0), Vec::Constant(1, 1.0)};
  EXPECT_DOUBLE_EQ(variance_bound_logistic(data, box, 1), 25.25);
  data.x.setZero();
  EXPECT_DOUBLE_EQ(variance_bound_logistic(data, box, 1), 0.0);
  EXPECT_THROW(variance_bound_logistic({Eigen::MatrixXd(0, 1), Vec(0)}, box, 1), std::invalid_argument);
}

TEST(VarianceBound, DominatesEmpiricalVariance) {
  const auto model = small_logistic(1);
  const auto box = DomainBox::make(2, 3, 1);
  const double bound = variance_bound_logistic(model.data, box, 1);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> um(-box.U, box.U), us(box.var_lo(), box.var_hi());
  for (int k = 0; k < 5; ++k) {
    const auto w = point({um(rng)}, {us(rng)});
    const Vec ex = flatten(exact_grad(w, model));
    double var = 0;
    const int R = 10000;
    for (int r = 0; r < R; ++r) var += (flatten(stoch_grad(w, model, {1, 1, 7u + k}, r)) - ex).squaredNorm();
    EXPECT_LE(var / R, bound);
  }
}

TEST(Cholesky, ObjectiveMatchesElboAndGradientsMatchFiniteDifferences) {
  const auto model = small_logistic(2);
  CholeskyParams th{Vec(2), Vec(2)};
  th.mu << 0.3, -0.2;
  th.c << 0.8, 1.3;
  EXPECT_NEAR(cholesky_objective(th, model, true), elbo(from_cholesky(th), model), 1e-12);
  for (bool entropy : {false, true}) {
    auto f = [&](const Vec& v) { return cholesky_objective({v.head(2), v.tail(2)}, model, entropy); };
    Vec flat(4);
    flat << th.mu, th.c;
    const Vec fd = oracle::fd_gradient(f, flat);
    const auto g = exact_grad_cholesky(th, model, entropy);
    Vec an(4);
    an << g.g_mu, g.g_c;
    EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-6);
  }
}
