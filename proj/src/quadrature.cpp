#include "ngvi/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace ngvi {

GaussHermite::GaussHermite(std::size_t n) {
  if (n == 0) throw std::invalid_argument("GaussHermite: need at least one node");
  using ld = long double;
  const ld pim4 = 0.7511255444649424828587030047762276930510L;  // pi^{-1/4}
  const ld nn = static_cast<ld>(n);

  // Golub-Welsch starting values: eigenvalues of the Jacobi matrix.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(0.5 * static_cast<double>(k));
  }
  const Eigen::VectorXd guess = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(jacobi, Eigen::EigenvaluesOnly).eigenvalues();

  // Newton polish in extended precision on the orthonormal recurrence; the
  // derivative also yields the weight.
  std::vector<ld> x(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    ld z = guess[static_cast<Eigen::Index>(i)];
    ld pp = 1.0L;
    for (int it = 0; it < 20; ++it) {
      ld p1 = pim4;
      ld p2 = 0.0L;
      for (std::size_t j = 0; j < n; ++j) {
        const ld p3 = p2;
        p2 = p1;
        const ld jj = static_cast<ld>(j);
        p1 = z * std::sqrt(2.0L / (jj + 1.0L)) * p2 - std::sqrt(jj / (jj + 1.0L)) * p3;
      }
      pp = std::sqrt(2.0L * nn) * p2;
      const ld step = p1 / pp;
      z -= step;
      if (std::abs(step) <= 1e-18L * std::max<ld>(1.0L, std::abs(z))) break;
    }
    x[i] = z;
    w[i] = 2.0L / (pp * pp);
  }

  const ld sqrt_pi = 1.7724538509055160272981674833411451827975L;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] < w[b]; });
  nodes_.reserve(n);
  weights_.reserve(n);
  for (std::size_t k : order) {
    nodes_.push_back(static_cast<double>(x[k]));
    weights_.push_back(static_cast<double>(w[k] / sqrt_pi));
  }
}

const GaussHermite& GaussHermite::rule(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<GaussHermite>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermite>(n);
  return *slot;
}

}  // namespace ngvi
