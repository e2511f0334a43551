#include "icsurv/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "icsurv/core.hpp"

namespace icsurv {

QuadratureRule gauss_hermite(std::size_t k) {
  if (k < 1 || k > 100) throw InvalidInput("quadrature point count must lie in [1, 100]");
  const int n = static_cast<int>(k);
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  QuadratureRule rule;
  rule.nodes.assign(k, 0.0);
  rule.weights.assign(k, 0.0);

  // Newton iteration on the orthonormal Hermite recurrence; roots are found
  // from the largest down, each seeded from the previous ones.
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * rule.nodes[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * rule.nodes[1];
    else
      z = 2.0 * z - rule.nodes[i - 2];

    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) {
        // one extra polish step at the converged root
        p1 = pim4;
        p2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
        }
        pp = std::sqrt(2.0 * n) * p2;
        break;
      }
      if (it == 99) throw std::runtime_error("gauss_hermite: Newton iteration did not converge");
    }
    rule.nodes[i] = z;
    rule.nodes[n - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  // stored largest-first above; flip to ascending
  std::vector<double> nodes(rule.nodes.rbegin(), rule.nodes.rend());
  std::vector<double> weights(rule.weights.rbegin(), rule.weights.rend());
  rule.nodes = std::move(nodes);
  rule.weights = std::move(weights);
  return rule;
}

NormalGrid normal_grid(const QuadratureRule& rule, double sigma2) {
  if (!(sigma2 >= 0.0)) throw InvalidInput("random-effect variance must be nonnegative");
  NormalGrid grid;
  if (sigma2 == 0.0) {
    grid.points = {0.0};
    grid.weights = {1.0};
    grid.log_weights = {0.0};
    return grid;
  }
  const double scale = std::sqrt(2.0 * sigma2);
  const double norm = 1.0 / std::sqrt(std::numbers::pi);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    grid.points.push_back(scale * rule.nodes[k]);
    grid.weights.push_back(norm * rule.weights[k]);
    grid.log_weights.push_back(std::log(norm * rule.weights[k]));
  }
  return grid;
}

double integrate_gaussian(const std::function<double(double)>& g, double sigma2,
                          const QuadratureRule& rule) {
  const NormalGrid grid = normal_grid(rule, sigma2);
  double sum = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double v = g(grid.points[k]);
    if (!std::isfinite(v)) throw InvalidInput("integrate_gaussian: non-finite integrand at a node");
    sum += grid.weights[k] * v;
  }
  return sum;
}

}  // namespace icsurv
