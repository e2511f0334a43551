#include "icsurv/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icsurv/kernels.hpp"
#include "icsurv/parallel.hpp"

namespace icsurv {

namespace {

struct RiskMoments {
  std::size_t ld = 0;
  std::vector<double> s0, s1, s2;
};

RiskMoments make_moments(std::size_t n_jumps, std::size_t d, bool full) {
  RiskMoments m;
  m.ld = n_jumps;
  m.s0.assign(n_jumps, 0.0);
  if (full) {
    m.s1.assign(n_jumps * d, 0.0);
    m.s2.assign(n_jumps * d * d, 0.0);
  }
  return m;
}

void accumulate(const kernels::KernelTable& k, const double* w, const double* x, std::size_t n, std::size_t d,
                RiskMoments& m) {
  if (m.s1.empty()) {
    for (std::size_t j = 0; j < n; ++j) m.s0[j] += w[j];
  } else {
    k.accumulate_moments(w, x, n, n, d, m.s0.data(), m.s1.data(), m.s2.data(), m.ld);
  }
}

bool same(std::span<const double> a, const std::vector<double>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Sum over subjects of e^{beta'X(t_j)} E[1(R_S >= t_j) e^b] (X, XX').
RiskMoments lambda_moments(const Design& design, const Posterior& post, std::span<const double> beta,
                           bool full) {
  const std::size_t d = design.dim();
  const auto& k = kernels::active();
  RiskMoments m = make_moments(design.lambda_support().size(), d, full);
  const bool cached = same(beta, post.params.beta);
  std::vector<double> w;
  for (std::size_t i = 0; i < design.size(); ++i) {
    const SubjectDesign& sd = design.subject(i);
    const std::size_t n = sd.n_lambda;
    if (n == 0) continue;
    w.resize(n);
    if (cached)
      k.mul(post.states[i].elp_lambda.data(), post.subjects[i].risk_exp_b.data(), n, w.data());
    else {
      k.exp_linear(sd.x_lambda.data(), n, n, beta.data(), d, w.data());
      k.mul(w.data(), post.subjects[i].risk_exp_b.data(), n, w.data());
    }
    accumulate(k, w.data(), sd.x_lambda.data(), n, d, m);
  }
  return m;
}

// Sum over the risk set {Y_r >= t_j} of e^{gamma'X_r(t_j)} E[e^{b_r}] (X, XX').
RiskMoments nu_moments(const Design& design, const Posterior& post, std::span<const double> gamma, bool full) {
  const std::size_t d = design.dim();
  const auto& k = kernels::active();
  RiskMoments m = make_moments(design.nu_support().size(), d, full);
  const bool cached = same(gamma, post.params.gamma);
  std::vector<double> w;
  for (std::size_t i = 0; i < design.size(); ++i) {
    const SubjectDesign& sd = design.subject(i);
    const std::size_t n = sd.n_nu;
    if (n == 0) continue;
    w.resize(n);
    if (cached)
      std::copy_n(post.states[i].elp_nu.data(), n, w.data());
    else
      k.exp_linear(sd.x_nu.data(), n, n, gamma.data(), d, w.data());
    const double e = post.subjects[i].e_exp_b;
    for (double& v : w) v *= e;
    accumulate(k, w.data(), sd.x_nu.data(), n, d, m);
  }
  return m;
}

// One Newton step for a Breslow-profiled Cox-type score:
//   U = first - sum_j D_j S1_j / S0_j,  I = sum_j D_j (S2_j / S0_j - S1_j S1_j' / S0_j^2).
std::vector<double> newton_step(const RiskMoments& m, std::span<const double> events,
                                const Eigen::VectorXd& first, std::span<const double> current,
                                const char* what, int iteration) {
  const std::size_t d = current.size();
  double total = 0.0;
  for (double e : events) total += e;
  if (total <= 0.0) return {current.begin(), current.end()};

  Eigen::VectorXd score = first;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd mean(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < events.size(); ++j) {
    const double dj = events[j];
    if (dj <= 0.0) continue;
    const double s0 = m.s0[j];
    if (!(s0 > 0.0))
      throw NumericalError(std::string(what) + ": empty risk set at a jump with events", iteration);
    for (std::size_t c = 0; c < d; ++c) mean(static_cast<Eigen::Index>(c)) = m.s1[c * m.ld + j] / s0;
    score -= dj * mean;
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t e = 0; e <= c; ++e) {
        const auto ci = static_cast<Eigen::Index>(c), ei = static_cast<Eigen::Index>(e);
        info(ci, ei) += dj * (m.s2[(c * d + e) * m.ld + j] / s0 - mean(ci) * mean(ei));
      }
  }
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t e = 0; e < c; ++e)
      info(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(c)) =
          info(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(e));

  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  const Eigen::VectorXd diag = ldlt.vectorD();
  const double scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || diag.minCoeff() <= 1e-12 * scale)
    throw NumericalError(std::string(what) + ": singular Hessian in Newton step", iteration);
  const Eigen::VectorXd step = ldlt.solve(score);
  std::vector<double> out(current.begin(), current.end());
  for (std::size_t c = 0; c < d; ++c) out[c] += step(static_cast<Eigen::Index>(c));
  return out;
}

void fill_posterior(const SubjectDesign& sd, const SubjectState& st, const NormalGrid& grid,
                    std::span<const double> lambda, SubjectPosterior& out) {
  const std::size_t nk = grid.size();
  const std::size_t n_iv = sd.intervals.size();
  const double ll = st.loglik;
  out.loglik = ll;
  out.weights.resize(n_iv * nk);
  out.e_b2 = 0.0;
  out.e_exp_b = 0.0;
  std::vector<double> eb(nk);
  for (std::size_t k = 0; k < nk; ++k) eb[k] = std::exp(grid.points[k]);

  std::vector<double> tail(sd.n_lambda + 1, 0.0);
  out.poisson.assign(sd.n_lambda, 0.0);
  for (std::size_t s = 0; s < n_iv; ++s) {
    const IntervalDesign& iv = sd.intervals[s];
    double m_s = 0.0, c_s = 0.0;
    const double mass = st.interval_mass[s];
    for (std::size_t k = 0; k < nk; ++k) {
      const double lt = st.log_terms[s * nk + k];
      const double w = std::exp(lt - ll);
      out.weights[s * nk + k] = w;
      if (w == 0.0) continue;
      const double b = grid.points[k];
      out.e_b2 += w * b * b;
      out.e_exp_b += w * eb[k];
      m_s += w * eb[k];
      if (iv.finite) c_s += std::exp(lt - ll + b - std::log(-std::expm1(-eb[k] * mass)));
    }
    tail[iv.risk_count] += m_s;
    if (iv.finite && c_s > 0.0)
      for (std::size_t j = iv.lo; j < iv.hi; ++j) out.poisson[j] = lambda[j] * st.elp_lambda[j] * c_s;
  }
  out.risk_exp_b.assign(sd.n_lambda, 0.0);
  double acc = tail[sd.n_lambda];
  for (std::size_t j = sd.n_lambda; j-- > 0;) {
    out.risk_exp_b[j] = acc;
    acc += tail[j];
  }
}

}  // namespace

std::string to_string(FitMode mode) {
  switch (mode) {
    case FitMode::full: return "full";
    case FitMode::no_rand_eff: return "no_rand_eff";
    case FitMode::perfect_diag: return "perfect_diag";
  }
  return "full";
}

FitMode parse_fit_mode(const std::string& s) {
  if (s == "full") return FitMode::full;
  if (s == "no_rand_eff") return FitMode::no_rand_eff;
  if (s == "perfect_diag") return FitMode::perfect_diag;
  throw InvalidInput("unknown fit mode '" + s + "' (expected full, no_rand_eff or perfect_diag)");
}

void FitConfig::validate() const {
  if (!(tol > 0.0)) throw InvalidInput("tol must be positive");
  if (max_iter < 1) throw InvalidInput("max_iter must be at least 1");
  if (quad_points < 1 || quad_points > 100) throw InvalidInput("quad_points must lie in [1, 100]");
  if (!(init_sigma2 >= 0.0)) throw InvalidInput("initial sigma2 must be nonnegative");
  if (!(sigma2_floor > 0.0)) throw InvalidInput("sigma2 floor must be positive");
}

std::vector<std::size_t> FittedModel::free_parameters() const {
  std::vector<std::size_t> idx;
  const std::size_t d = theta.dim();
  for (std::size_t c = 0; c < 2 * d; ++c) idx.push_back(c);
  if (mode != FitMode::no_rand_eff) idx.push_back(2 * d);
  return idx;
}

ModelParams effective_params(const ModelParams& params, FitMode mode) {
  ModelParams p = params;
  if (mode == FitMode::perfect_diag) p.p = p.q = 1.0;
  if (mode == FitMode::no_rand_eff) p.sigma2 = 0.0;
  return p;
}

NormalGrid fit_grid(const QuadratureRule& rule, double sigma2, FitMode mode) {
  return normal_grid(rule, mode == FitMode::no_rand_eff ? 0.0 : sigma2);
}

Posterior e_step(const Design& design, const ModelParams& params, std::span<const double> lambda,
                 std::span<const double> nu, const NormalGrid& grid, std::size_t workers,
                 const Posterior* previous) {
  Posterior post;
  post.grid = grid;
  post.params = params;
  const std::size_t n = design.size();
  post.subjects.resize(n);
  post.states.resize(n);
  const bool reuse_lambda = previous && previous->states.size() == n && previous->params.beta == params.beta;
  const bool reuse_nu = previous && previous->states.size() == n && previous->params.gamma == params.gamma;
  parallel_for(n, workers, [&](std::size_t i) {
    SubjectState& st = post.states[i];
    if (reuse_lambda) st.elp_lambda = previous->states[i].elp_lambda;
    if (reuse_nu) st.elp_nu = previous->states[i].elp_nu;
    design.evaluate(i, params, lambda, nu, grid, st, reuse_lambda, reuse_nu);
    const double ll = st.loglik;
    if (!std::isfinite(ll))
      throw NumericalError("subject '" + design.id(i) + "': zero likelihood under current parameters");
    fill_posterior(design.subject(i), st, grid, lambda, post.subjects[i]);
  });
  post.loglik = 0.0;
  for (const auto& s : post.subjects) post.loglik += s.loglik;
  return post;
}

std::vector<double> update_gamma(const Design& design, const Posterior& post,
                                 std::span<const double> gamma_current, int iteration) {
  const std::size_t d = design.dim();
  Eigen::VectorXd first = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const SubjectDesign& sd : design.subjects())
    if (sd.delta == 1)
      for (std::size_t c = 0; c < d; ++c) first(static_cast<Eigen::Index>(c)) += sd.x_death[c];
  const RiskMoments m = nu_moments(design, post, gamma_current, true);
  return newton_step(m, design.death_counts(), first, gamma_current, "gamma update", iteration);
}

std::vector<double> update_beta(const Design& design, const Posterior& post,
                                std::span<const double> beta_current, int iteration) {
  const std::size_t d = design.dim();
  const std::size_t J = design.lambda_support().size();
  std::vector<double> events(J, 0.0);
  Eigen::VectorXd first = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < design.size(); ++i) {
    const SubjectDesign& sd = design.subject(i);
    const auto& u = post.subjects[i].poisson;
    for (std::size_t j = 0; j < sd.n_lambda; ++j) {
      if (u[j] == 0.0) continue;
      events[j] += u[j];
      for (std::size_t c = 0; c < d; ++c)
        first(static_cast<Eigen::Index>(c)) += u[j] * sd.x_lambda[c * sd.n_lambda + j];
    }
  }
  const RiskMoments m = lambda_moments(design, post, beta_current, true);
  return newton_step(m, events, first, beta_current, "beta update", iteration);
}

double update_sigma2(const Posterior& post) {
  if (post.subjects.empty()) return 0.0;
  double s = 0.0;
  for (const auto& sp : post.subjects) s += sp.e_b2;
  return s / static_cast<double>(post.subjects.size());
}

JumpSizes update_jumps(const Design& design, const Posterior& post, std::span<const double> beta,
                       std::span<const double> gamma) {
  JumpSizes out;
  const RiskMoments mn = nu_moments(design, post, gamma, false);
  const auto& deaths = design.death_counts();
  out.nu.assign(deaths.size(), 0.0);
  for (std::size_t j = 0; j < deaths.size(); ++j) {
    if (deaths[j] == 0.0) continue;
    if (!(mn.s0[j] > 0.0)) throw NumericalError("nu update: empty risk set at a death time");
    out.nu[j] = deaths[j] / mn.s0[j];
  }
  const std::size_t J = design.lambda_support().size();
  std::vector<double> events(J, 0.0);
  for (std::size_t i = 0; i < design.size(); ++i) {
    const auto& u = post.subjects[i].poisson;
    for (std::size_t j = 0; j < u.size(); ++j) events[j] += u[j];
  }
  const RiskMoments ml = lambda_moments(design, post, beta, false);
  out.lambda.assign(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    if (events[j] == 0.0) continue;
    if (!(ml.s0[j] > 0.0)) throw NumericalError("lambda update: empty risk set at a jump with events");
    out.lambda[j] = events[j] / ml.s0[j];
  }
  return out;
}

FittedModel fit(const Dataset& data, const FitConfig& config) {
  config.validate();
  const bool perfect = config.mode == FitMode::perfect_diag;
  const double p = perfect ? 1.0 : config.p;
  const double q = perfect ? 1.0 : config.q;
  {
    ModelParams probe;
    probe.beta.assign(data.dim(), 0.0);
    probe.gamma.assign(data.dim(), 0.0);
    probe.p = p;
    probe.q = q;
    validate_params(probe, data.dim());
  }
  const Design design(data, p, q);
  return fit(design, config);
}

namespace {

struct EmState {
  ModelParams params;
  std::vector<double> lambda;
  std::vector<double> nu;
  Posterior post;
  bool theta_frozen = false;  ///< theta held fixed because every step on it lowered the log-likelihood
};

// One EM iteration on (theta, baselines). beta and gamma take one Newton step
// each and sigma2 its closed-form update; the theta step is halved while the
// observed log-likelihood would drop. The sigma2 update is not an exact EM step
// for the quadrature-approximated likelihood, because the nodes scale with
// sigma2, so it is halved too.
EmState em_step(const Design& design, const FitConfig& config, const QuadratureRule& rule, bool random_effect,
                const EmState& s, int iter) {
  const std::size_t d = design.dim();
  const std::vector<double> beta_full = update_beta(design, s.post, s.params.beta, iter);
  const std::vector<double> gamma_full = update_gamma(design, s.post, s.params.gamma, iter);
  const double sigma2_new = random_effect ? std::max(update_sigma2(s.post), config.sigma2_floor) : 0.0;

  EmState out;
  out.params = s.params;
  for (int h = 0; h <= config.max_halvings + 1; ++h) {
    // After max_halvings theta is held fixed: the jump updates alone are an
    // exact EM step on a fixed quadrature grid and cannot lower the likelihood.
    const double scale = h <= config.max_halvings ? std::ldexp(1.0, -h) : 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      out.params.beta[c] = s.params.beta[c] + scale * (beta_full[c] - s.params.beta[c]);
      out.params.gamma[c] = s.params.gamma[c] + scale * (gamma_full[c] - s.params.gamma[c]);
    }
    out.params.sigma2 = random_effect ? s.params.sigma2 + scale * (sigma2_new - s.params.sigma2) : 0.0;
    out.theta_frozen = scale == 0.0;
    JumpSizes jumps = update_jumps(design, s.post, out.params.beta, out.params.gamma);
    out.lambda = std::move(jumps.lambda);
    out.nu = std::move(jumps.nu);
    try {
      out.post = e_step(design, out.params, out.lambda, out.nu, normal_grid(rule, out.params.sigma2),
                        config.workers, &s.post);
    } catch (const NumericalError&) {
      if (scale == 0.0) throw;
      continue;
    }
    if (out.post.loglik >= s.post.loglik - config.ascent_slack || scale == 0.0) break;
  }
  return out;
}

EmState baseline_step(const Design& design, const NormalGrid& grid, std::size_t workers, const EmState& s) {
  EmState out;
  out.params = s.params;
  JumpSizes jumps = update_jumps(design, s.post, s.params.beta, s.params.gamma);
  out.lambda = std::move(jumps.lambda);
  out.nu = std::move(jumps.nu);
  out.post = e_step(design, out.params, out.lambda, out.nu, grid, workers, &s.post);
  return out;
}

// Squared-extrapolation (SQUAREM, scheme 3) from three successive iterates.
// Coefficients move linearly, sigma2 and jump sizes in log scale; a jump that
// is zero in any iterate is copied from the last one. Returns the step length.
double extrapolate(const EmState& s0, const EmState& s1, const EmState& s2, bool with_theta, bool random_effect,
                   double step_max, EmState& out) {
  struct Coord {
    double v0, v1, v2;
    bool log_scale;
    double* target;
  };
  out.params = s2.params;
  out.lambda = s2.lambda;
  out.nu = s2.nu;
  std::vector<Coord> coords;
  if (with_theta) {
    for (std::size_t c = 0; c < s0.params.beta.size(); ++c)
      coords.push_back({s0.params.beta[c], s1.params.beta[c], s2.params.beta[c], false, &out.params.beta[c]});
    for (std::size_t c = 0; c < s0.params.gamma.size(); ++c)
      coords.push_back({s0.params.gamma[c], s1.params.gamma[c], s2.params.gamma[c], false, &out.params.gamma[c]});
    if (random_effect) coords.push_back({s0.params.sigma2, s1.params.sigma2, s2.params.sigma2, true, &out.params.sigma2});
  }
  for (std::size_t j = 0; j < s0.lambda.size(); ++j)
    coords.push_back({s0.lambda[j], s1.lambda[j], s2.lambda[j], true, &out.lambda[j]});
  for (std::size_t j = 0; j < s0.nu.size(); ++j)
    coords.push_back({s0.nu[j], s1.nu[j], s2.nu[j], true, &out.nu[j]});

  double rr = 0.0, vv = 0.0;
  for (auto& c : coords) {
    if (c.log_scale) {
      if (!(c.v0 > 0.0 && c.v1 > 0.0 && c.v2 > 0.0)) {
        c.target = nullptr;
        continue;
      }
      c.v0 = std::log(c.v0);
      c.v1 = std::log(c.v1);
      c.v2 = std::log(c.v2);
    }
    const double r = c.v1 - c.v0, v = c.v2 - 2.0 * c.v1 + c.v0;
    rr += r * r;
    vv += v * v;
  }
  if (!(vv > 0.0)) return -1.0;
  const double alpha = std::clamp(-std::sqrt(rr / vv), -step_max, -1.0);
  if (alpha == -1.0) return alpha;
  for (const auto& c : coords) {
    if (!c.target) continue;
    const double r = c.v1 - c.v0, v = c.v2 - 2.0 * c.v1 + c.v0;
    const double u = c.v0 - 2.0 * alpha * r + alpha * alpha * v;
    *c.target = c.log_scale ? std::exp(u) : u;
  }
  return alpha;
}

double theta_change(const ModelParams& a, const ModelParams& b) {
  const auto ta = a.theta(), tb = b.theta();
  double change = 0.0;
  for (std::size_t c = 0; c < ta.size(); ++c) change = std::max(change, std::abs(ta[c] - tb[c]));
  return change;
}

constexpr double kStepGrowth = 4.0;

}  // namespace

FittedModel fit(const Design& design, const FitConfig& config) {
  config.validate();
  const std::size_t d = design.dim();
  if (config.mode == FitMode::perfect_diag && (design.p() != 1.0 || design.q() != 1.0))
    throw InvalidInput("perfect_diag mode requires a design built with p = q = 1");

  EmState s;
  ModelParams& params = s.params;
  params.beta = config.init_beta.empty() ? std::vector<double>(d, 0.0) : config.init_beta;
  params.gamma = config.init_gamma.empty() ? std::vector<double>(d, 0.0) : config.init_gamma;
  params.p = design.p();
  params.q = design.q();
  const bool random_effect = config.mode != FitMode::no_rand_eff;
  params.sigma2 = random_effect ? std::max(config.init_sigma2, config.sigma2_floor) : 0.0;
  validate_params(params, d);

  const std::size_t J1 = design.nu_support().size(), J2 = design.lambda_support().size();
  s.lambda = config.init_lambda ? project_onto_support(*config.init_lambda, design.lambda_support())
                                : std::vector<double>(J2, J2 ? 1.0 / static_cast<double>(J2) : 0.0);
  s.nu = config.init_nu ? project_onto_support(*config.init_nu, design.nu_support())
                        : std::vector<double>(J1, J1 ? 1.0 / static_cast<double>(J1) : 0.0);

  const QuadratureRule rule = gauss_hermite(config.quad_points);
  FittedModel out;
  out.mode = config.mode;
  out.quad_points = config.quad_points;

  s.post = e_step(design, params, s.lambda, s.nu, normal_grid(rule, params.sigma2), config.workers);
  out.loglik_trace.push_back(s.post.loglik);

  double step_max = 1.0;
  int evals = 0;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    EmState next = em_step(design, config, rule, random_effect, s, ++evals);
    out.loglik_trace.push_back(next.post.loglik);
    if (config.accelerate) {
      EmState s2 = em_step(design, config, rule, random_effect, next, ++evals);
      out.loglik_trace.push_back(s2.post.loglik);
      EmState ext;
      const double alpha = extrapolate(s, next, s2, true, random_effect, step_max, ext);
      bool accepted = false;
      if (alpha < -1.0) {
        try {
          ext.params.sigma2 = random_effect ? std::max(ext.params.sigma2, config.sigma2_floor) : 0.0;
          ext.post = e_step(design, ext.params, ext.lambda, ext.nu, normal_grid(rule, ext.params.sigma2),
                            config.workers);
          EmState stab = em_step(design, config, rule, random_effect, ext, ++evals);
          if (std::isfinite(stab.post.loglik) && stab.post.loglik >= s2.post.loglik - config.ascent_slack) {
            out.loglik_trace.push_back(stab.post.loglik);
            next = std::move(stab);
            accepted = true;
          }
        } catch (const NumericalError&) {
        }
      }
      // At alpha = -1 the extrapolation reduces to the plain EM iterate.
      const bool tried = alpha < -1.0;
      if (alpha == -step_max && (accepted || !tried)) step_max *= kStepGrowth;
      else if (tried && !accepted) step_max = std::max(1.0, step_max / kStepGrowth);
      if (!accepted) next = std::move(s2);
    }
    const double change = theta_change(s.params, next.params);
    const bool frozen = next.theta_frozen;
    s = std::move(next);
    out.n_iter = iter;
    if (change < config.tol && !frozen) {
      out.converged = true;
      break;
    }
  }

  out.theta = s.params;
  out.lambda = BaselineHazard{design.lambda_support(), s.lambda};
  out.nu = BaselineHazard{design.nu_support(), s.nu};
  if (random_effect && s.params.sigma2 <= config.sigma2_floor * (1.0 + 1e-12))
    out.warnings.push_back("random-effect variance ended at its lower bound");
  if (!out.converged) out.warnings.push_back("maximum iterations reached before convergence");
  return out;
}

BaselineFit fit_baselines(const Design& design, const ModelParams& params,
                          std::span<const double> lambda0, std::span<const double> nu0,
                          const NormalGrid& grid, const BaselineFitConfig& config) {
  BaselineFit out;
  EmState s;
  s.params = params;
  s.lambda.assign(lambda0.begin(), lambda0.end());
  s.nu.assign(nu0.begin(), nu0.end());
  s.post = e_step(design, params, s.lambda, s.nu, grid, config.workers);
  double step_max = 1.0;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    EmState next = baseline_step(design, grid, config.workers, s);
    if (config.accelerate) {
      EmState s2 = baseline_step(design, grid, config.workers, next);
      EmState ext;
      const double alpha = extrapolate(s, next, s2, false, false, step_max, ext);
      bool accepted = false;
      if (alpha < -1.0) {
        try {
          ext.post = e_step(design, ext.params, ext.lambda, ext.nu, grid, config.workers, &s2.post);
          EmState stab = baseline_step(design, grid, config.workers, ext);
          if (std::isfinite(stab.post.loglik) && stab.post.loglik >= s2.post.loglik) {
            next = std::move(stab);
            accepted = true;
          }
        } catch (const NumericalError&) {
        }
      }
      // At alpha = -1 the extrapolation reduces to the plain EM iterate.
      const bool tried = alpha < -1.0;
      if (alpha == -step_max && (accepted || !tried)) step_max *= kStepGrowth;
      else if (tried && !accepted) step_max = std::max(1.0, step_max / kStepGrowth);
      if (!accepted) next = std::move(s2);
    }
    const double gain = next.post.loglik - s.post.loglik;
    s = std::move(next);
    out.n_iter = iter;
    if (gain < config.rel_tol * std::abs(s.post.loglik)) {
      out.converged = true;
      break;
    }
  }
  out.lambda = std::move(s.lambda);
  out.nu = std::move(s.nu);
  out.loglik = s.post.loglik;
  out.subject_loglik.resize(design.size());
  for (std::size_t i = 0; i < design.size(); ++i) out.subject_loglik[i] = s.post.subjects[i].loglik;
  return out;
}

}  // namespace icsurv
