#pragma once

// Gauss-Hermite rules for Gaussian expectations E[g(S)], S ~ N(mean, var).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace ngvi {

inline constexpr std::size_t kDefaultHermiteNodes = 100;

class GaussHermite {
 public:
  /// Rule for the weight exp(-x^2) with n nodes.  Nodes are computed once by
  /// Newton iteration on the normalized Hermite recurrence.
  explicit GaussHermite(std::size_t n);

  /// Shared, lazily built rule.  Thread-safe.
  static const GaussHermite& rule(std::size_t n = kDefaultHermiteNodes);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

  /// E[g(S)] for S ~ N(mean, var).  var == 0 degenerates to g(mean).
  /// R must support R += double * R and value-initialization.
  template <class F>
  auto expect(F&& g, double mean, double var) const -> decltype(g(mean)) {
    using R = decltype(g(mean));
    if (var <= 0.0) return g(mean);
    const double scale = std::sqrt(2.0 * var);
    R acc{};
    // Smallest weights first.
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      acc += weights_[k] * g(mean + scale * nodes_[k]);
    }
    return acc;
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;  // already divided by sqrt(pi)
};

}  // namespace ngvi
