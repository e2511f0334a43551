#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace icsurv {

/// Gauss-Hermite rule for weight e^{-x^2} (physicists' convention).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

/// Nodes and weights for 1 <= k <= 100, ascending nodes.
QuadratureRule gauss_hermite(std::size_t k);

/// Points b_k and normalized weights w_k / sqrt(pi) such that
/// sum_k w_k g(b_k) approximates E[g(b)] for b ~ N(0, sigma2).
/// sigma2 == 0 collapses to a single point at 0 with weight 1.
struct NormalGrid {
  std::vector<double> points;
  std::vector<double> weights;
  std::vector<double> log_weights;
  std::size_t size() const { return points.size(); }
};

NormalGrid normal_grid(const QuadratureRule& rule, double sigma2);

/// E[g(b)], b ~ N(0, sigma2). Throws if g is non-finite at any node.
double integrate_gaussian(const std::function<double(double)>& g, double sigma2,
                          const QuadratureRule& rule);

}  // namespace icsurv
