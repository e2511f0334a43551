#include "icsurv/predict.hpp"

#include <algorithm>
#include <cmath>

#include "icsurv/likelihood.hpp"
#include "icsurv/quadrature.hpp"

namespace icsurv {

namespace {

NormalGrid fitted_grid(const FittedModel& fitted) {
  return normal_grid(gauss_hermite(fitted.quad_points),
                     fitted.mode == FitMode::no_rand_eff ? 0.0 : fitted.theta.sigma2);
}

// exp(coef' X(t_j)) at every jump time of `hazard` up to `t_max`.
std::vector<double> jump_weights(const BaselineHazard& hazard, const CovariatePath& x,
                                 const std::vector<double>& coef, double t_max) {
  std::vector<double> out;
  std::vector<double> buf(x.dim());
  for (std::size_t j = 0; j < hazard.size() && hazard.jump_times[j] <= t_max; ++j) {
    x.eval(hazard.jump_times[j], buf);
    double lp = 0.0;
    for (std::size_t c = 0; c < buf.size(); ++c) lp += coef[c] * buf[c];
    out.push_back(hazard.jump_sizes[j] * std::exp(lp));
  }
  return out;
}

}  // namespace

PopulationCurves population_curves(const FittedModel& fitted, const Dataset& data,
                                   const std::vector<double>& grid) {
  if (data.size() == 0) throw InvalidInput("population curves need a nonempty dataset");
  if (data.dim() != fitted.theta.dim()) throw InvalidInput("dataset dimension does not match the fitted model");
  if (!std::is_sorted(grid.begin(), grid.end())) throw InvalidInput("prediction grid must be ascending");
  for (double t : grid)
    if (!(t >= 0.0 && t <= data.tau())) throw InvalidInput("prediction grid must lie within [0, tau]");

  PopulationCurves out;
  out.grid = grid;
  out.cif.assign(grid.size(), 0.0);
  // Accumulates P(D <= t) so that no death hazard gives exactly S = 1.
  out.survival.assign(grid.size(), 0.0);
  if (grid.empty()) return out;
  const double t_max = grid.back();
  const NormalGrid ng = fitted_grid(fitted);
  const auto& lt = fitted.lambda.jump_times;
  const auto& vt = fitted.nu.jump_times;
  const double inv_n = 1.0 / static_cast<double>(data.size());

  for (const auto& s : data.subjects()) {
    const auto a = jump_weights(fitted.lambda, s.covariates, fitted.theta.beta, t_max);
    const auto v = jump_weights(fitted.nu, s.covariates, fitted.theta.gamma, t_max);
    // Cumulative V-part at each lambda jump and at each grid point (b = 0).
    std::vector<double> a_cum(a.size()), v_at_a(a.size());
    std::vector<double> v_grid(grid.size());
    {
      double acc_a = 0.0, acc_v = 0.0;
      std::size_t iv = 0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        while (iv < v.size() && vt[iv] <= lt[j]) acc_v += v[iv++];
        acc_a += a[j];
        a_cum[j] = acc_a;
        v_at_a[j] = acc_v;
      }
      acc_v = 0.0;
      iv = 0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        while (iv < v.size() && vt[iv] <= grid[g]) acc_v += v[iv++];
        v_grid[g] = acc_v;
      }
    }
    for (std::size_t k = 0; k < ng.points.size(); ++k) {
      const double eb = std::exp(ng.points[k]);
      const double w = ng.weights[k] * inv_n;
      double f = 0.0;
      std::size_t j = 0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        while (j < a.size() && lt[j] <= grid[g]) {
          f += std::exp(-eb * (a_cum[j] + v_at_a[j])) * eb * a[j];
          ++j;
        }
        out.cif[g] += w * f;
        out.survival[g] -= w * std::expm1(-eb * v_grid[g]);
      }
    }
  }
  for (auto& f : out.cif) f = std::min(f, 1.0);
  for (auto& s : out.survival) s = std::clamp(1.0 - s, 0.0, 1.0);
  return out;
}

void PredictionQuery::validate(std::size_t dim) const {
  const std::string who = "prediction query '" + id + "': ";
  if (covariates.dim() != dim) throw InvalidInput(who + "covariate dimension does not match the fitted model");
  if (times.size() != diagnoses.size()) throw InvalidInput(who + "history times and diagnoses differ in length");
  if (!std::isfinite(t) || t < 0.0) throw InvalidInput(who + "conditioning time must be finite and nonnegative");
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!(times[j] > 0.0) || (j > 0 && !(times[j] > times[j - 1])))
      throw InvalidInput(who + "history times must be positive and strictly ascending");
    if (diagnoses[j] != 0 && diagnoses[j] != 1) throw InvalidInput(who + "diagnoses must be 0 or 1");
  }
  if (!times.empty() && times.back() > t) throw InvalidInput(who + "history extends past the conditioning time");
  if (horizon.empty()) throw InvalidInput(who + "empty horizon grid");
  for (std::size_t g = 0; g < horizon.size(); ++g) {
    if (!std::isfinite(horizon[g]) || horizon[g] < t) throw InvalidInput(who + "horizon points must be >= t");
    if (g > 0 && horizon[g] < horizon[g - 1]) throw InvalidInput(who + "horizon grid must be ascending");
  }
}

DynamicPrediction predict(const FittedModel& fitted, const PredictionQuery& query) {
  query.validate(fitted.theta.dim());
  const auto& x = query.covariates;
  const auto& beta = fitted.theta.beta;
  const auto& gamma = fitted.theta.gamma;
  const std::size_t k = query.times.size();
  const std::size_t G = query.horizon.size();
  const NormalGrid ng = fitted_grid(fitted);

  std::vector<double> a_q(k);
  for (std::size_t l = 0; l < k; ++l) a_q[l] = cumhaz_at(fitted.lambda, x, beta, 0.0, query.times[l]);
  const double v_t = cumhaz_at(fitted.nu, x, gamma, 0.0, query.t);
  std::vector<double> a_h(G), v_h(G);
  for (std::size_t g = 0; g < G; ++g) {
    a_h[g] = cumhaz_at(fitted.lambda, x, beta, 0.0, query.horizon[g]);
    v_h[g] = cumhaz_at(fitted.nu, x, gamma, 0.0, query.horizon[g]);
  }
  std::vector<double> dp(k + 1);
  for (std::size_t l = 0; l <= k; ++l)
    dp[l] = diagnosis_prob(query.diagnoses, l, fitted.theta.p, fitted.theta.q);

  double den = 0.0;
  std::vector<double> num_s(G, 0.0), num_f(G, 0.0);
  for (std::size_t n = 0; n < ng.points.size(); ++n) {
    const double eb = std::exp(ng.points[n]);
    double mix = 0.0, prev = 1.0;
    for (std::size_t l = 0; l < k; ++l) {
      const double next = std::exp(-eb * a_q[l]);
      mix += dp[l] * (prev - next);
      prev = next;
    }
    mix += dp[k] * prev;
    const double w = ng.weights[n];
    den += w * std::exp(-eb * v_t) * mix;
    for (std::size_t g = 0; g < G; ++g) {
      const double sd = std::exp(-eb * v_h[g]);
      num_s[g] += w * sd * mix;
      num_f[g] += w * sd * dp[k] * std::exp(-eb * a_h[g]);
    }
  }
  if (!(den > 0.0) || !std::isfinite(den))
    throw NumericalError("prediction query '" + query.id + "': history has zero probability under the fitted model");

  DynamicPrediction out;
  out.horizon = query.horizon;
  out.survival.resize(G);
  out.disease_free.resize(G);
  for (std::size_t g = 0; g < G; ++g) {
    out.survival[g] = std::min(1.0, num_s[g] / den);
    out.disease_free[g] = std::min(out.survival[g], num_f[g] / den);
  }
  return out;
}

std::vector<double> dynamic_survival(const FittedModel& fitted, const PredictionQuery& query) {
  return predict(fitted, query).survival;
}

std::vector<double> dynamic_disease_free(const FittedModel& fitted, const PredictionQuery& query) {
  return predict(fitted, query).disease_free;
}

}  // namespace icsurv
