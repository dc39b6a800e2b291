#include "ngvi/diagnostics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace ngvi;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

LikelihoodModel one_point(ModelKind kind, double x, double y) {
  return LikelihoodModel::make(kind, {Eigen::MatrixXd::Constant(1, 1, x), Vec::Constant(1, y)});
}

ExpectationParams point(double mu, double s2) { return to_expectation({v1(mu), v1(s2)}); }

LikelihoodModel logistic2d() {
  Eigen::MatrixXd x(3, 2);
  x << 1.0, 0.3, -0.6, 0.8, 1.2, -0.4;
  Vec y(3);
  y << 1, -1, 1;
  return LikelihoodModel::make(ModelKind::kLogistic, {x, y});
}

}  // namespace

TEST(Hessian, MatchesFiniteDifferencesLogistic2d) {
  const auto model = logistic2d();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> um(-1.5, 1.5), us(0.4, 2.0);
  for (int k = 0; k < 5; ++k) {
    Vec mu(2), s2(2);
    mu << um(rng), um(rng);
    s2 << us(rng), us(rng);
    const auto w = to_expectation({mu, s2});
    const Eigen::MatrixXd fd = oracle::fd_hessian(
        [&](const Vec& f) { return elbo(unflatten_expectation(f), model, Quadrature{}); }, flatten(w), 1e-4);
    const Eigen::MatrixXd h = hessian_elbo(w, model);
    EXPECT_LT((fd - h).cwiseAbs().maxCoeff(), 1e-4) << "\n" << fd << "\n\n" << h;
    EXPECT_LT((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Hessian, MatchesFiniteDifferencesPoisson1d) {
  Eigen::MatrixXd x(2, 1);
  x << 0.9, -0.3;
  Vec y(2);
  y << 24, 1;
  const auto model = LikelihoodModel::make(ModelKind::kPoisson, {x, y});
  const auto w = point(0.5, 0.7);
  const Eigen::MatrixXd fd =
      oracle::fd_hessian([&](const Vec& f) { return elbo(unflatten_expectation(f), model); }, flatten(w), 1e-4);
  const Eigen::MatrixXd h = hessian_elbo(w, model);
  EXPECT_LT((fd - h).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Hessian, LinearModelHasOnlyHContribution) {
  Eigen::MatrixXd x(2, 2);
  x << 1.0, 0.5, -0.3, 2.0;
  Vec y(2);
  y << 0.1, 0.2;
  const auto model = LikelihoodModel::make(ModelKind::kLinear, {x, y});
  const auto w = to_expectation({Vec::Ones(2), Vec::Constant(2, 0.5)});
  const Eigen::MatrixXd h = hessian_loglik(w, model);
  const Eigen::MatrixXd H = x.transpose() * x;
  EXPECT_DOUBLE_EQ(h(0, 2), H(0, 1));
  EXPECT_DOUBLE_EQ(h(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(h(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(h(0, 1), 0.0);
}

TEST(Certificate, LinearIsExactlyOneOne) {
  const auto cert = certify_relative_smoothness(one_point(ModelKind::kLinear, 1.3, 0.4), DomainBox::make(2, 3, 1),
                                                {7});
  EXPECT_NEAR(cert.alpha, 1.0, 1e-12);
  EXPECT_NEAR(cert.beta, 1.0, 1e-12);
  EXPECT_GE(cert.min_slack, -1e-9);
  ASSERT_TRUE(cert.iff.has_value());
  EXPECT_EQ(cert.iff->disagreements, 0u);
}

TEST(Certificate, LogisticBelowSufficientConstant) {
  const auto model = one_point(ModelKind::kLogistic, 1.0, 1.0);
  const auto box = DomainBox::make(1, 2, 1);
  const auto cert = certify_relative_smoothness(model, box, {15});
  const auto suff = sufficient_constants(ModelKind::kLogistic, model.data, box);
  EXPECT_DOUBLE_EQ(suff.L1, 1.0);
  EXPECT_DOUBLE_EQ(suff.L2, 0.25);
  EXPECT_DOUBLE_EQ(suff.beta, 1.25);
  EXPECT_LE(cert.beta, suff.beta + 1.0);
  EXPECT_GE(cert.min_slack, -1e-9);
  EXPECT_EQ(cert.iff->disagreements, 0u);
  // A given pair reproduces the same slack.
  const auto given = certify_relative_smoothness(model, box, {15}, std::make_pair(cert.alpha, cert.beta));
  EXPECT_NEAR(given.min_slack, cert.min_slack, 1e-12);
  EXPECT_LT(certify_relative_smoothness(model, box, {15}, std::make_pair(cert.alpha, 0.9 * cert.beta)).min_slack,
            0.0);
}

TEST(Certificate, GridRefinementIsStable) {
  const auto model = one_point(ModelKind::kLogistic, 1.0, 1.0);
  const auto box = DomainBox::make(1, 2, 1);
  const double coarse = certify_relative_smoothness(model, box, {15}).beta;
  const double fine = certify_relative_smoothness(model, box, {41}).beta;
  EXPECT_LE(std::abs(fine - coarse), 0.05 * fine);
}

TEST(Certificate, IffAgreementAcrossParameters) {
  const auto model = one_point(ModelKind::kLogistic, 1.0, 1.0);
  const auto grid = box_grid(DomainBox::make(1, 2, 1), {21});
  for (double beta : {0.02, 0.1, 0.2, 0.5, 1.25}) {
    EXPECT_EQ(check_univariate_iff(model, grid, beta, true).disagreements, 0u) << beta;
    EXPECT_EQ(check_univariate_iff(model, grid, -beta, false).disagreements, 0u) << beta;
  }
}

TEST(Certificate, SampledForLargeDimension) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Identity(4, 4);
  const auto model = LikelihoodModel::make(ModelKind::kLogistic, {x, Vec::Ones(4)});
  GridSpec spec;
  spec.random_samples = 200;
  const auto cert = certify_relative_smoothness(model, DomainBox::make(1, 2, 4), spec);
  EXPECT_TRUE(cert.sampled);
  EXPECT_EQ(cert.grid.size(), 200u);
  EXPECT_FALSE(cert.iff.has_value());
}

TEST(SufficientConstants, Cases) {
  const auto box = DomainBox::make(1, 2, 1);
  Dataset zero{Eigen::MatrixXd::Zero(1, 1), Vec::Ones(1)};
  const auto s = sufficient_constants(ModelKind::kLogistic, zero, box);
  EXPECT_EQ(s.L1, 0.0);
  EXPECT_EQ(s.L2, 0.0);
  EXPECT_EQ(s.beta, 0.0);
  EXPECT_EQ(sufficient_constants(ModelKind::kLinear, zero, box).beta, 0.0);
  EXPECT_THROW(sufficient_constants(ModelKind::kPoisson, zero, box), std::invalid_argument);
  Dataset two{Eigen::MatrixXd::Ones(1, 2), Vec::Ones(1)};
  EXPECT_TRUE(sufficient_constants(ModelKind::kLogistic, two, DomainBox::make(1, 2, 2)).heuristic);
}

TEST(Moduli, Formulas) {
  const auto m = moduli(DomainBox::make(4, 25, 1));
  EXPECT_DOUBLE_EQ(m.mu_C, 1.0 / std::sqrt(165.0));
  EXPECT_NEAR(m.mu_C, 0.0778499, 1e-7);
  EXPECT_DOUBLE_EQ(m.mu_H, 1.0);
  EXPECT_DOUBLE_EQ(m.mu_B, m.mu_C * m.mu_C / (9.0 * 16.0 * 625.0));
  // The strong-convexity formula also evaluates at D = 1, outside the box invariant.
  DomainBox unit{1.0, 1.0, 1};
  const auto u = moduli(unit);
  EXPECT_DOUBLE_EQ(u.C_S, 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(u.C_L, 4.5);
}

TEST(Moduli, HessianEigenvaluesWithinBounds) {
  const auto box = DomainBox::make(2, 3, 1);
  const auto m = moduli(box);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> um(-box.U, box.U), us(box.var_lo(), box.var_hi());
  for (int k = 0; k < 1000; ++k) {
    const auto ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(hessian_A_star(point(um(rng), us(rng)))[0]).eigenvalues();
    EXPECT_GE(ev.minCoeff(), m.C_S);
    EXPECT_LE(ev.maxCoeff(), m.C_L);
  }
}

TEST(Bfbe, ZeroAtInteriorStationaryPoint) {
  const double x = 1.0, y = 0.5;
  const auto model = one_point(ModelKind::kLinear, x, y);
  const auto w = point(x * y / (x * x + 1), 1 / (x * x + 1));
  const auto r = bfbe(w, 10.0, model, DomainBox::make(2, 4, 1));
  EXPECT_LT(std::abs(r.value), 1e-10);
}

TEST(Bfbe, MinimizerMatchesGridSearch) {
  const auto model = one_point(ModelKind::kLogistic, 1.0, 1.0);
  const auto box = DomainBox::make(2, 4, 1);
  for (double rho : {0.5, 2.0}) {
    for (auto w : {point(1.5, 0.5), point(-1.0, 3.0)}) {
      const auto r = bfbe(w, rho, model, box);
      const auto g = exact_grad(w, model);
      const auto best = oracle::grid_minimize_2d(
          [&](double mu, double s2) {
            const auto cand = point(mu, s2);
            return inner(g, difference(cand, w)) + rho * bregman_A_star(cand, w);
          },
          -box.U, box.U, box.var_lo(), box.var_hi());
      const auto p = to_standard(r.minimizer);
      EXPECT_NEAR(best.mu, p.mu[0], 2 * oracle::grid_resolution(-box.U, box.U));
      EXPECT_NEAR(best.sigma2, p.sigma2[0], 2 * oracle::grid_resolution(box.var_lo(), box.var_hi()));
      EXPECT_NEAR(r.value, -2 * rho * best.value, 1e-6 * std::max(1.0, r.value));
      EXPECT_GE(r.value, 0.0);
    }
  }
}

TEST(Bfbe, DominatesScaledGradientNorm) {
  const auto model = one_point(ModelKind::kLogistic, 1.0, 1.0);
  const auto box = DomainBox::make(2, 4, 1);
  const double C_L = moduli(box).C_L;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> um(-1.8, 1.8), us(0.3, 3.5);
  for (int k = 0; k < 20; ++k) {
    const auto w = point(um(rng), us(rng));
    EXPECT_GE(bfbe(w, 1e6, model, box).value, exact_grad(w, model).squared_norm() / (2 * C_L));
  }
}

TEST(Assumption2, Examples) {
  EXPECT_TRUE(assumption2_linear1d(1, 1, 1, 3));
  EXPECT_FALSE(assumption2_linear1d(1, 3, 1, 3));
  EXPECT_TRUE(assumption2_linear1d(0, 0, 1, 2));
}

TEST(PlResidual, ZeroAtOptimumAndMonotoneInMu) {
  const double x = 1.0, y = 0.5;
  const auto model = one_point(ModelKind::kLinear, x, y);
  const auto box = DomainBox::make(2, 4, 1);
  const auto w = point(x * y / (x * x + 1), 1 / (x * x + 1));
  EXPECT_NEAR(pl_residual(w, model, box, elbo(w, model)), 0.0, 1e-14);
  EXPECT_THROW(pl_residual(point(2.0, 1.0), model, box, 0.0), DomainError);
  const auto off = point(1.0, 1.5);
  const double ell = elbo(w, model);
  // A larger box has a smaller mu_C, hence a larger residual.
  EXPECT_GT(pl_residual(off, model, DomainBox::make(3, 6, 1), ell), pl_residual(off, model, box, ell));
}

TEST(DescentAudit, LinearAndPoisson) {
  const auto lin = one_point(ModelKind::kLinear, 1.0, 2.0);
  RunOptions opt;
  opt.algorithm = Algorithm::kSngd;
  opt.schedule = StepSchedule::constant(1.0);
  opt.T = 10;
  EXPECT_TRUE(descent_audit(run(lin, point(-2, 3), opt), 1.0).passed());

  const auto poi = one_point(ModelKind::kPoisson, 0.9, 24);
  opt.schedule = StepSchedule::constant(0.3);
  opt.T = 5;
  const auto report = descent_audit(run(poi, point(-1.5, 2.0), opt), 1 / 0.3);
  ASSERT_FALSE(report.passed());
  EXPECT_EQ(report.violations.front(), 1u);

  opt.gradient.kind = GradientKind::kStochastic;
  EXPECT_THROW(descent_audit(run(poi, point(-1.5, 2.0), opt), 1 / 0.3), std::invalid_argument);
}

TEST(Coercivity, AllKindsAllPaths) {
  const auto lin = one_point(ModelKind::kLinear, 1.0, 0.5);
  const auto logi = one_point(ModelKind::kLogistic, 1.0, 1.0);
  const auto poi = one_point(ModelKind::kPoisson, 0.9, 24);
  for (const auto* m : {&lin, &logi, &poi}) {
    for (auto path : {CoercivityPath::kMuRay, CoercivityPath::kSigmaToZero, CoercivityPath::kSigmaToInf}) {
      const auto r = coercivity_scan(*m, path);
      EXPECT_EQ(r.values.size(), 20u);
      EXPECT_TRUE(r.tail_increasing) << to_string(m->kind) << " path " << static_cast<int>(path);
    }
  }
}

TEST(Stein, BoundHolds) {
  const auto model = one_point(ModelKind::kLogistic, 1.0, 1.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> um(-3, 3), us(0.05, 5);
  for (int k = 0; k < 100; ++k) EXPECT_TRUE(stein_bound_check(model, point(um(rng), us(rng)), 0, 0).holds());
  const auto zero = one_point(ModelKind::kLogistic, 0.0, 1.0);
  const auto c = stein_bound_check(zero, point(0.3, 1.0), 0, 0);
  EXPECT_EQ(c.lhs, 0.0);
  EXPECT_EQ(c.rhs, 0.0);
  EXPECT_THROW(stein_bound_check(one_point(ModelKind::kPoisson, 1, 1), point(0, 1), 0, 0), std::invalid_argument);
  const auto m2 = logistic2d();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_TRUE(stein_bound_check(m2, to_expectation({Vec::Zero(2), Vec::Constant(2, 0.2)}), i, j).holds());
}

TEST(NonConvexity, LogisticXiSecondDifferenceCanBeNegative) {
  // Scan replicated data and small variances for a negative curvature along Xi at xi = 0.
  bool found = false;
  for (int reps : {1, 10, 100}) {
    const auto model = LikelihoodModel::make(
        ModelKind::kLogistic, {Eigen::MatrixXd::Ones(reps, 1), Vec::Ones(reps)});
    for (double s2 : {0.5, 0.1, 0.02}) {
      const double h = 1e-4 * s2;
      auto f = [&](double Xi) { return elbo({v1(0), v1(Xi)}, model, Quadrature{}); };
      const double second = (f(s2 + h) - 2 * f(s2) + f(s2 - h)) / (h * h);
      if (second < 0) found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(OptimalValue, LinearClosedForm) {
  const double x = 1.2, y = -0.7;
  const auto model = one_point(ModelKind::kLinear, x, y);
  const auto est = optimal_value(model, DomainBox::make(2, 4, 1), point(1, 2), 0.5);
  EXPECT_TRUE(est.converged);
  EXPECT_NEAR(est.ell_star, elbo(point(x * y / (x * x + 1), 1 / (x * x + 1)), model), 1e-12);
}
