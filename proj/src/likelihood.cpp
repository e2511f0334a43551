#include "icsurv/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icsurv/kernels.hpp"

namespace icsurv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kNone = static_cast<std::size_t>(-1);

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

std::size_t count_upto(const std::vector<double>& support, double t) {
  return static_cast<std::size_t>(std::upper_bound(support.begin(), support.end(), t) -
                                  support.begin());
}

double log_diagnosis(const AugmentedSchedule& sched, std::size_t s, double p, double q) {
  double acc = 0.0;
  for (std::size_t v = 0; v < sched.times.size(); ++v) {
    const bool perfect = v == sched.perfect_visit;
    const double pv = perfect ? 1.0 : p;
    const double qv = perfect ? 1.0 : q;
    const int xi = sched.diagnoses[v];
    // visit v (0-based) precedes onset iff v < s
    const double prob = v < s ? (xi ? 1.0 - qv : qv) : (xi ? pv : 1.0 - pv);
    if (prob <= 0.0) return kNegInf;
    acc += std::log(prob);
  }
  return acc;
}

}  // namespace

double log_interval_prob(double a, double mass, bool finite) {
  if (!finite) return -a;
  if (!(mass > 0.0)) return kNegInf;
  return -a + std::log(-std::expm1(-mass));
}

double cumhaz_at(const BaselineHazard& hazard, const std::function<double(double)>& lp, double t) {
  double sum = 0.0;
  for (std::size_t j = 0; j < hazard.size() && hazard.jump_times[j] <= t; ++j)
    sum += hazard.jump_sizes[j] * std::exp(lp(hazard.jump_times[j]));
  return sum;
}

double cumhaz_at(const BaselineHazard& hazard, const CovariatePath& x, std::span<const double> coef,
                 double offset, double t) {
  std::vector<double> buf(x.dim());
  return cumhaz_at(
      hazard,
      [&](double s) {
        x.eval(s, buf);
        return dot(coef, buf) + offset;
      },
      t);
}

double interval_prob(const Subject& subject, const ModelParams& params, const BaselineHazard& lambda,
                     double b, std::size_t s) {
  const AugmentedSchedule sched = apply_autopsy_augmentation(subject);
  if (s >= sched.interval_count()) throw InvalidInput("interval index out of range");
  const OnsetInterval iv = sched.interval(s);
  const double a = cumhaz_at(lambda, subject.covariates, params.beta, b, iv.left);
  const double survive_left = std::exp(-a);
  if (!iv.finite()) return survive_left;
  const double u = cumhaz_at(lambda, subject.covariates, params.beta, b, iv.right);
  return survive_left - std::exp(-u);
}

double diagnosis_prob(std::span<const int> xi, std::size_t s, double p, double q) {
  double prob = 1.0;
  for (std::size_t j = 0; j < xi.size(); ++j) {
    // visit j+1 (1-based) is pre-onset iff j + 1 <= s
    if (j < s)
      prob *= xi[j] ? 1.0 - q : q;
    else
      prob *= xi[j] ? p : 1.0 - p;
  }
  return prob;
}

double diagnosis_prob(const AugmentedSchedule& schedule, std::size_t s, double p, double q) {
  return std::exp(log_diagnosis(schedule, s, p, q));
}

double joint_factor(const Subject& subject, const ModelParams& params, const BaselineHazard& lambda,
                    const BaselineHazard& nu, double b, std::size_t s) {
  const AugmentedSchedule sched = apply_autopsy_augmentation(subject);
  double log_death = -cumhaz_at(nu, subject.covariates, params.gamma, b, subject.y);
  if (subject.delta == 1) {
    double jump = 0.0;
    for (std::size_t j = 0; j < nu.size(); ++j)
      if (nu.jump_times[j] == subject.y) jump += nu.jump_sizes[j];
    const auto x = subject.covariates.eval(subject.y);
    log_death += std::log(jump) + dot(params.gamma, x) + b;
  }
  const double ld = log_diagnosis(sched, s, params.p, params.q);
  const double ip = interval_prob(subject, params, lambda, b, s);
  if (ld == kNegInf || !(ip > 0.0)) return kNegInf;
  return log_death + ld + std::log(ip);
}

Design::Design(const Dataset& data, double p, double q)
    : Design(data, p, q, data.disease_support(), data.death_support()) {}

Design::Design(const Dataset& data, double p, double q, std::vector<double> lambda_support,
               std::vector<double> nu_support)
    : dim_(data.dim()),
      p_(p),
      q_(q),
      lambda_support_(std::move(lambda_support)),
      nu_support_(std::move(nu_support)) {
  const std::size_t d = dim_;
  death_counts_.assign(nu_support_.size(), 0.0);
  subjects_.reserve(data.size());
  std::vector<double> x(d);
  for (const Subject& s : data.subjects()) {
    SubjectDesign sd;
    const AugmentedSchedule sched = apply_autopsy_augmentation(s);
    for (const OnsetInterval& iv : sched.admissible()) {
      IntervalDesign id;
      id.index = iv.index;
      id.finite = iv.finite();
      id.log_diag = log_diagnosis(sched, iv.index, p, q);
      if (id.log_diag == kNegInf) continue;
      id.lo = count_upto(lambda_support_, iv.left);
      id.hi = id.finite ? count_upto(lambda_support_, iv.right) : id.lo;
      id.risk_count = id.finite ? id.hi : id.lo;
      sd.n_lambda = std::max(sd.n_lambda, id.risk_count);
      sd.intervals.push_back(id);
    }
    if (sd.intervals.empty())
      throw InvalidInput("subject '" + s.id +
                         "': diagnosis sequence has probability zero under the accuracy settings");

    sd.x_lambda.resize(d * sd.n_lambda);
    for (std::size_t j = 0; j < sd.n_lambda; ++j) {
      s.covariates.eval(lambda_support_[j], x);
      for (std::size_t c = 0; c < d; ++c) sd.x_lambda[c * sd.n_lambda + j] = x[c];
    }
    sd.n_nu = count_upto(nu_support_, s.y);
    sd.x_nu.resize(d * sd.n_nu);
    for (std::size_t j = 0; j < sd.n_nu; ++j) {
      s.covariates.eval(nu_support_[j], x);
      for (std::size_t c = 0; c < d; ++c) sd.x_nu[c * sd.n_nu + j] = x[c];
    }
    sd.x_death = s.covariates.eval(s.y);
    sd.delta = s.delta;
    if (s.delta == 1) {
      auto it = std::lower_bound(nu_support_.begin(), nu_support_.end(), s.y);
      if (it != nu_support_.end() && *it == s.y) {
        sd.death_jump = static_cast<std::size_t>(it - nu_support_.begin());
        death_counts_[sd.death_jump] += 1.0;
      }
    }
    subjects_.push_back(std::move(sd));
    ids_.push_back(s.id);
  }
}

void Design::evaluate(std::size_t i, const ModelParams& params, std::span<const double> lambda,
                      std::span<const double> nu, const NormalGrid& grid, SubjectState& state,
                      bool keep_elp_lambda, bool keep_elp_nu) const {
  const SubjectDesign& sd = subjects_[i];
  const kernels::KernelTable& k = kernels::active();
  const std::size_t d = dim_;

  if (!keep_elp_lambda || state.elp_lambda.size() != sd.n_lambda) {
    state.elp_lambda.resize(sd.n_lambda);
    k.exp_linear(sd.x_lambda.data(), sd.n_lambda, sd.n_lambda, params.beta.data(), d,
                 state.elp_lambda.data());
  }
  if (!keep_elp_nu || state.elp_nu.size() != sd.n_nu) {
    state.elp_nu.resize(sd.n_nu);
    k.exp_linear(sd.x_nu.data(), sd.n_nu, sd.n_nu, params.gamma.data(), d, state.elp_nu.data());
  }
  state.cum_nu = k.dot(nu.data(), state.elp_nu.data(), sd.n_nu);

  if (sd.delta == 1) {
    const double jump = sd.death_jump == kNone ? 0.0 : nu[sd.death_jump];
    state.log_death = jump > 0.0 ? std::log(jump) + dot(params.gamma, sd.x_death) : kNegInf;
  } else {
    state.log_death = 0.0;
  }

  // Hazard increments lambda_j e^{beta'X(t_j)}; intervals are disjoint and ascending.
  std::vector<double> inc(sd.n_lambda);
  k.mul(lambda.data(), state.elp_lambda.data(), sd.n_lambda, inc.data());
  const std::size_t n_iv = sd.intervals.size();
  state.interval_mass.assign(n_iv, 0.0);
  state.lambda_before.assign(n_iv, 0.0);
  double running = 0.0;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < n_iv; ++s) {
    const IntervalDesign& iv = sd.intervals[s];
    for (; pos < iv.lo; ++pos) running += inc[pos];
    state.lambda_before[s] = running;
    if (iv.finite) {
      double m = 0.0;
      for (std::size_t j = iv.lo; j < iv.hi; ++j) m += inc[j];
      state.interval_mass[s] = m;
    }
  }

  const std::size_t nk = grid.size();
  state.log_terms.resize(n_iv * nk);
  for (std::size_t kk = 0; kk < nk; ++kk) {
    const double b = grid.points[kk];
    const double eb = std::exp(b);
    const double base = grid.log_weights[kk] + state.log_death + sd.delta * b - eb * state.cum_nu;
    for (std::size_t s = 0; s < n_iv; ++s) {
      const IntervalDesign& iv = sd.intervals[s];
      state.log_terms[s * nk + kk] =
          base + iv.log_diag +
          log_interval_prob(eb * state.lambda_before[s], eb * state.interval_mass[s], iv.finite);
    }
  }
  state.loglik = k.log_sum_exp(state.log_terms.data(), state.log_terms.size());
}

std::vector<double> project_onto_support(const BaselineHazard& hazard,
                                         const std::vector<double>& support) {
  std::vector<double> sizes(support.size(), 0.0);
  for (std::size_t j = 0; j < hazard.size(); ++j) {
    auto it = std::lower_bound(support.begin(), support.end(), hazard.jump_times[j]);
    if (it == support.end() || *it != hazard.jump_times[j])
      throw InvalidInput("baseline hazard jumps outside its support");
    sizes[static_cast<std::size_t>(it - support.begin())] += hazard.jump_sizes[j];
  }
  return sizes;
}

namespace {

std::vector<double> support_of(const BaselineHazard& h) {
  std::vector<double> t = h.jump_times;
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

}  // namespace

std::vector<double> subject_logliks(const Dataset& data, const ModelParams& params,
                                    const BaselineHazard& lambda, const BaselineHazard& nu,
                                    const QuadratureRule& rule) {
  validate_params(params, data.dim());
  const Design design(data, params.p, params.q, support_of(lambda), support_of(nu));
  const auto lam = project_onto_support(lambda, design.lambda_support());
  const auto nus = project_onto_support(nu, design.nu_support());
  const NormalGrid grid = normal_grid(rule, params.sigma2);
  std::vector<double> out(data.size());
  SubjectState state;
  for (std::size_t i = 0; i < data.size(); ++i) {
    design.evaluate(i, params, lam, nus, grid, state);
    if (!std::isfinite(state.loglik))
      throw InvalidInput("subject '" + data[i].id + "': non-finite likelihood contribution");
    out[i] = state.loglik;
  }
  return out;
}

double observed_loglik(const Dataset& data, const ModelParams& params, const BaselineHazard& lambda,
                       const BaselineHazard& nu, const QuadratureRule& rule) {
  double total = 0.0;
  for (double v : subject_logliks(data, params, lambda, nu, rule)) total += v;
  return total;
}

}  // namespace icsurv
