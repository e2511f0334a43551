#pragma once

// Random instance generators and straight-line reference implementations used
// as oracles. Nothing here calls into the likelihood or EM code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "icsurv/core.hpp"

namespace testing_support {

using icsurv::BaselineHazard;
using icsurv::CovariatePath;
using icsurv::ModelParams;
using icsurv::Subject;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct InstanceShape {
  std::size_t dim = 2;
  std::size_t max_visits = 3;
  bool time_varying = true;
  double autopsy_rate = 0.5;
  double death_rate = 0.5;
};

inline double unif(std::mt19937_64& g, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(g);
}

inline int coin(std::mt19937_64& g, double p) { return std::bernoulli_distribution(p)(g) ? 1 : 0; }

/// Subject with random visits on a coarse grid so that times can tie across subjects.
inline Subject random_subject(std::mt19937_64& g, const InstanceShape& shape, const std::string& id) {
  Subject s;
  s.id = id;
  const std::size_t nv = std::uniform_int_distribution<std::size_t>(0, shape.max_visits)(g);
  double t = 0.0;
  for (std::size_t j = 0; j < nv; ++j) {
    t += 0.25 * static_cast<double>(std::uniform_int_distribution<int>(1, 4)(g));
    s.monitor_times.push_back(t);
    s.diagnoses.push_back(coin(g, 0.5));
  }
  s.y = t + 0.25 * static_cast<double>(std::uniform_int_distribution<int>(0, 4)(g));
  if (s.y <= 0.0) s.y = 0.5;
  s.delta = coin(g, shape.death_rate);
  if (s.delta == 1) {
    s.autopsy_done = coin(g, shape.autopsy_rate);
    if (s.autopsy_done == 1) s.autopsy_positive = coin(g, 0.5);
  }
  std::vector<double> times{0.0};
  std::vector<double> values;
  for (std::size_t c = 0; c < shape.dim; ++c) values.push_back(unif(g, -1.0, 1.0));
  if (shape.time_varying && coin(g, 0.7)) {
    const double tc = std::max(0.1, unif(g, 0.1, s.y));
    times.push_back(tc);
    for (std::size_t c = 0; c < shape.dim; ++c) values.push_back(unif(g, -1.0, 1.0));
  }
  s.covariates = CovariatePath::tabulated(times, values, shape.dim);
  return s;
}

inline std::vector<Subject> random_subjects(std::mt19937_64& g, std::size_t n, const InstanceShape& shape) {
  std::vector<Subject> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_subject(g, shape, "s" + std::to_string(i)));
  return out;
}

inline BaselineHazard random_hazard(std::mt19937_64& g, const std::vector<double>& support, double lo,
                                    double hi, std::size_t max_jumps = 1000) {
  BaselineHazard h;
  std::vector<double> pts = support;
  std::shuffle(pts.begin(), pts.end(), g);
  if (pts.size() > max_jumps) pts.resize(max_jumps);
  std::sort(pts.begin(), pts.end());
  for (double t : pts) {
    h.jump_times.push_back(t);
    h.jump_sizes.push_back(unif(g, lo, hi));
  }
  return h;
}

inline ModelParams random_params(std::mt19937_64& g, std::size_t dim, double sigma2_hi = 0.6) {
  ModelParams m;
  for (std::size_t c = 0; c < dim; ++c) m.beta.push_back(unif(g, -0.8, 0.8));
  for (std::size_t c = 0; c < dim; ++c) m.gamma.push_back(unif(g, -0.8, 0.8));
  m.sigma2 = unif(g, 0.05, sigma2_hi);
  m.p = unif(g, 0.7, 1.0);
  m.q = unif(g, 0.6, 1.0);
  return m;
}

namespace oracle {

inline double linear(const Subject& s, const std::vector<double>& coef, double t) {
  const std::vector<double> x = s.covariates.eval(t);
  double v = 0.0;
  for (std::size_t c = 0; c < coef.size(); ++c) v += coef[c] * x[c];
  return v;
}

/// sum_{t_j <= t} size_j exp(coef' X(t_j) + b), evaluated jump by jump.
inline double cumulative(const BaselineHazard& h, const Subject& s, const std::vector<double>& coef, double b,
                         double t) {
  double sum = 0.0;
  for (std::size_t j = 0; j < h.jump_times.size(); ++j)
    if (h.jump_times[j] <= t) sum += h.jump_sizes[j] * std::exp(linear(s, coef, h.jump_times[j]) + b);
  return sum;
}

inline double jump_at(const BaselineHazard& h, double t) {
  for (std::size_t j = 0; j < h.jump_times.size(); ++j)
    if (h.jump_times[j] == t) return h.jump_sizes[j];
  return 0.0;
}

/// Monitoring times with the autopsy appended as a last visit.
struct Schedule {
  std::vector<double> q;
  std::vector<int> xi;
  std::vector<bool> perfect;
};

inline Schedule schedule(const Subject& s) {
  Schedule sc;
  sc.q = s.monitor_times;
  sc.xi = s.diagnoses;
  sc.perfect.assign(sc.q.size(), false);
  if (s.delta == 1 && s.autopsy_done == 1) {
    sc.q.push_back(s.y);
    sc.xi.push_back(s.autopsy_positive);
    sc.perfect.push_back(true);
  }
  return sc;
}

/// Probability of the diagnoses when onset lies in interval l (1-based visits
/// j <= l precede onset).
inline double diag_prob(const Schedule& sc, std::size_t l, double p, double q) {
  double prod = 1.0;
  for (std::size_t j = 0; j < sc.q.size(); ++j) {
    const double pj = sc.perfect[j] ? 1.0 : p, qj = sc.perfect[j] ? 1.0 : q;
    const int x = sc.xi[j];
    if (j + 1 <= l)
      prod *= std::pow(qj, 1 - x) * std::pow(1.0 - qj, x);
    else
      prod *= std::pow(pj, x) * std::pow(1.0 - pj, 1 - x);
  }
  return prod;
}

inline double left_end(const Schedule& sc, std::size_t l) { return l == 0 ? 0.0 : sc.q[l - 1]; }
inline double right_end(const Schedule& sc, std::size_t l) { return l < sc.q.size() ? sc.q[l] : kInf; }

inline double interval_probability(const Subject& s, const ModelParams& m, const BaselineHazard& lambda, double b,
                            std::size_t l) {
  const Schedule sc = schedule(s);
  const double a = std::exp(-cumulative(lambda, s, m.beta, b, left_end(sc, l)));
  const double r = right_end(sc, l);
  return std::isfinite(r) ? a - std::exp(-cumulative(lambda, s, m.beta, b, r)) : a;
}

inline double death_factor(const Subject& s, const ModelParams& m, const BaselineHazard& nu, double b) {
  double f = std::exp(-cumulative(nu, s, m.gamma, b, s.y));
  if (s.delta == 1) f *= jump_at(nu, s.y) * std::exp(linear(s, m.gamma, s.y) + b);
  return f;
}

/// L(O, S = l, b): the joint factor without the normal density.
inline double joint(const Subject& s, const ModelParams& m, const BaselineHazard& lambda, const BaselineHazard& nu,
                    double b, std::size_t l) {
  const Schedule sc = schedule(s);
  return death_factor(s, m, nu, b) * diag_prob(sc, l, m.p, m.q) * interval_probability(s, m, lambda, b, l);
}

/// sum over S of the joint factor, for fixed b.
inline double mixture(const Subject& s, const ModelParams& m, const BaselineHazard& lambda, const BaselineHazard& nu,
                      double b) {
  const Schedule sc = schedule(s);
  double sum = 0.0;
  for (std::size_t l = 0; l <= sc.q.size(); ++l) sum += joint(s, m, lambda, nu, b, l);
  return sum;
}

/// sum_S P(xi | S) P(S | b) via latent Poisson counts: enumerate which jumps
/// carry a positive count; the first positive count fixes the onset interval,
/// and no positive count at all places onset after the last visit.
inline double poisson_mixture(const Subject& s, const ModelParams& m, const BaselineHazard& lambda, double b) {
  const Schedule sc = schedule(s);
  const std::size_t jn = lambda.jump_times.size();
  std::vector<double> mu(jn);
  for (std::size_t j = 0; j < jn; ++j)
    mu[j] = lambda.jump_sizes[j] * std::exp(linear(s, m.beta, lambda.jump_times[j]) + b);
  double total = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << jn); ++mask) {
    double prob = 1.0;
    std::size_t first = jn;
    for (std::size_t j = 0; j < jn; ++j) {
      const bool pos = (mask >> j) & 1U;
      prob *= pos ? -std::expm1(-mu[j]) : std::exp(-mu[j]);
      if (pos && first == jn) first = j;
    }
    std::size_t l = sc.q.size();
    if (first < jn) {
      const double tf = lambda.jump_times[first];
      l = 0;
      while (l < sc.q.size() && sc.q[l] < tf) ++l;
    }
    total += prob * diag_prob(sc, l, m.p, m.q);
  }
  return total;
}

/// Trapezoid rule for E[g(b)], b ~ N(0, sigma2), on [-span sd, span sd].
template <class G>
double dense_normal_expectation(G&& g, double sigma2, std::size_t points = 100001, double span = 12.0) {
  const double sd = std::sqrt(sigma2);
  const double lo = -span * sd, step = 2.0 * span * sd / static_cast<double>(points - 1);
  const double norm = 1.0 / std::sqrt(2.0 * M_PI * sigma2);
  double sum = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    const double b = lo + step * static_cast<double>(k);
    const double w = (k == 0 || k + 1 == points) ? 0.5 : 1.0;
    sum += w * g(b) * norm * std::exp(-0.5 * b * b / sigma2);
  }
  return sum * step;
}

}  // namespace oracle

}  // namespace testing_support
