#include "icsurv/simgen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "icsurv/parallel.hpp"

namespace icsurv::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                    double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  if (b <= a) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, 40);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

void SimSetting::validate() const {
  if (n < 1) throw InvalidInput("simulation setting: n must be at least 1");
  if (!(p > 0.0 && p <= 1.0) || !(q > 0.0 && q <= 1.0))
    throw InvalidInput("simulation setting: p and q must lie in (0, 1]");
  if (!(r >= 0.0 && r <= 1.0)) throw InvalidInput("simulation setting: r must lie in [0, 1]");
  if (!(sigma2_true >= 0.0)) throw InvalidInput("simulation setting: sigma2_true must be nonnegative");
  if (beta_true.size() != 2 || gamma_true.size() != 2)
    throw InvalidInput("simulation setting: beta_true and gamma_true must have two entries");
  if (n_visits < 0) throw InvalidInput("simulation setting: n_visits must be nonnegative");
  if (!(visit_min_gap > 0.0) || !(visit_gap_width >= 0.0))
    throw InvalidInput("simulation setting: visit gaps must be positive");
  if (!(censor_lo > 0.0) || !(censor_hi >= censor_lo) || !(censor_cap > 0.0))
    throw InvalidInput("simulation setting: invalid censoring bounds");
  if (!(time_horizon > std::min(censor_hi, censor_cap)))
    throw InvalidInput("simulation setting: time_horizon must exceed the maximum follow-up");
}

CovariatePath simulation_covariates(double x1, double a, double u, double c) {
  return CovariatePath::analytic(2, [x1, a, u, c](double t, std::span<double> out) {
    out[0] = x1;
    out[1] = c * std::sin(0.2 * a * t + u);
  });
}

double cumulative_hazard(const std::function<double(double)>& baseline_hazard, const CovariatePath& x,
                         const std::vector<double>& coef, double b, double t, double abs_tol) {
  std::vector<double> buf(x.dim());
  const auto integrand = [&](double s) {
    x.eval(s, buf);
    double lp = b;
    for (std::size_t c = 0; c < buf.size(); ++c) lp += coef[c] * buf[c];
    return baseline_hazard(s) * std::exp(lp);
  };
  return adaptive_simpson(integrand, 0.0, t, abs_tol);
}

double invert_cumulative_hazard(const std::function<double(double)>& cumhaz, double target, double horizon) {
  if (!(target > 0.0)) return 0.0;
  const double f_hi = cumhaz(horizon) - target;
  if (f_hi < 0.0) return kInf;
  if (f_hi == 0.0) return horizon;
  const auto f = [&](double t) { return cumhaz(t) - target; };
  std::uintmax_t max_iter = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, 0.0, horizon, -target, f_hi,
                                                          boost::math::tools::eps_tolerance<double>(48),
                                                          max_iter);
  if (max_iter >= 200) throw NumericalError("event-time inversion did not converge");
  return 0.5 * (lo + hi);
}

GeneratedSubject generate_subject(const SimSetting& s, Philox& rng, std::string id) {
  const double x1 = rng.uniform(-1.0, 1.0);
  const double a = rng.uniform(-1.0, 1.0);
  const double u = rng.uniform(-1.0, 1.0);
  const double c = rng.uniform(-1.0, 1.0);
  const double b = std::sqrt(s.sigma2_true) * rng.normal();
  const double e_t = rng.exponential();
  const double e_d = rng.exponential();
  const double censor = std::min(rng.uniform(s.censor_lo, s.censor_hi), s.censor_cap);
  std::vector<double> gaps(static_cast<std::size_t>(s.n_visits)), xi_u(gaps.size());
  for (double& g : gaps) g = s.visit_min_gap + rng.uniform(0.0, s.visit_gap_width);
  for (double& v : xi_u) v = rng.uniform();
  const double g_u = rng.uniform();

  CovariatePath x = simulation_covariates(x1, a, u, c);
  const auto h_t = [](double t) { return 0.25 / (1.0 + 0.25 * t); };
  const auto h_d = [](double t) { return 0.02 * t; };
  const auto cum_t = [&](double t) { return cumulative_hazard(h_t, x, s.beta_true, b, t); };
  const auto cum_d = [&](double t) { return cumulative_hazard(h_d, x, s.gamma_true, b, t); };

  GeneratedSubject out;
  out.truth.b = b;
  out.truth.c = censor;
  out.truth.t = invert_cumulative_hazard(cum_t, e_t, s.time_horizon);
  out.truth.d = invert_cumulative_hazard(cum_d, e_d, s.time_horizon);

  Subject& sub = out.subject;
  sub.id = std::move(id);
  sub.covariates = std::move(x);
  sub.delta = out.truth.d <= censor ? 1 : 0;
  sub.y = std::min(out.truth.d, censor);
  double q = 0.0;
  for (std::size_t j = 0; j < gaps.size(); ++j) {
    q += gaps[j];
    if (q > sub.y) break;
    sub.monitor_times.push_back(q);
    const bool diseased = out.truth.t <= q;
    sub.diagnoses.push_back(diseased ? (xi_u[j] < s.p) : (xi_u[j] < 1.0 - s.q));
  }
  if (sub.delta == 1 && g_u < s.r) {
    sub.autopsy_done = 1;
    sub.autopsy_positive = out.truth.t <= sub.y ? 1 : 0;
  }
  return out;
}

std::vector<GeneratedSubject> generate_replicate(const SimSetting& setting, std::uint64_t replicate) {
  setting.validate();
  std::vector<GeneratedSubject> out;
  out.reserve(setting.n);
  for (std::size_t i = 0; i < setting.n; ++i) {
    Philox rng(setting.seed, subject_stream(replicate, i));
    out.push_back(generate_subject(setting, rng, std::to_string(i + 1)));
  }
  return out;
}

Dataset generate_dataset(const SimSetting& setting, std::uint64_t replicate) {
  auto gen = generate_replicate(setting, replicate);
  std::vector<Subject> subjects;
  subjects.reserve(gen.size());
  for (auto& g : gen) subjects.push_back(std::move(g.subject));
  return Dataset(std::move(subjects));
}

Subject transform_first_diag(const Subject& s) {
  Subject out = s;
  const auto it = std::find(s.diagnoses.begin(), s.diagnoses.end(), 1);
  if (it == s.diagnoses.end()) return out;
  const auto keep = static_cast<std::size_t>(it - s.diagnoses.begin()) + 1;
  out.monitor_times.resize(keep);
  out.diagnoses.resize(keep);
  // The interval is settled by the first positive; a later autopsy would
  // contradict the truncation, so it is dropped.
  out.autopsy_done = 0;
  out.autopsy_positive = 0;
  return out;
}

Subject transform_last_diag(const Subject& s) {
  Subject out = s;
  if (s.has_autopsy()) {
    out.monitor_times.clear();
    out.diagnoses.clear();
  } else if (!s.monitor_times.empty()) {
    out.monitor_times.assign(1, s.monitor_times.back());
    out.diagnoses.assign(1, s.diagnoses.back());
  }
  return out;
}

Dataset transform_dataset(const Dataset& data, Subject (*fn)(const Subject&)) {
  std::vector<Subject> out;
  out.reserve(data.size());
  for (const auto& s : data.subjects()) out.push_back(fn(s));
  return Dataset(std::move(out));
}

std::string to_string(Method m) {
  switch (m) {
    case Method::proposed: return "proposed";
    case Method::first_diag: return "first_diag";
    case Method::last_diag: return "last_diag";
    case Method::no_rand_eff: return "no_rand_eff";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  throw InvalidInput("unknown method '" + s + "'");
}

Dataset method_dataset(const Dataset& data, Method m) {
  switch (m) {
    case Method::first_diag: return transform_dataset(data, transform_first_diag);
    case Method::last_diag: return transform_dataset(data, transform_last_diag);
    default: return data;
  }
}

FitConfig method_fit_config(const FitConfig& base, const SimSetting& setting, Method m) {
  FitConfig cfg = base;
  cfg.p = setting.p;
  cfg.q = setting.q;
  switch (m) {
    case Method::proposed: cfg.mode = FitMode::full; break;
    case Method::no_rand_eff: cfg.mode = FitMode::no_rand_eff; break;
    case Method::first_diag:
    case Method::last_diag:
      cfg.mode = FitMode::perfect_diag;
      cfg.p = cfg.q = 1.0;
      break;
  }
  return cfg;
}

ReplicateConfig::ReplicateConfig() {
  for (int k = 5; k <= 40; ++k) curve_grid.push_back(0.1 * k);
}

std::vector<std::string> parameter_names(std::size_t dim) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < dim; ++c) names.push_back("beta" + std::to_string(c + 1));
  for (std::size_t c = 0; c < dim; ++c) names.push_back("gamma" + std::to_string(c + 1));
  names.push_back("sigma2");
  return names;
}

ReplicateRecord run_method(const SimSetting& setting, const Dataset& data, std::size_t replicate, Method m,
                           const ReplicateConfig& config) {
  ReplicateRecord rec;
  rec.replicate = replicate;
  rec.method = m;
  const auto start = std::chrono::steady_clock::now();
  try {
    const Dataset md = method_dataset(data, m);
    FitConfig fc = method_fit_config(config.fit, setting, m);
    fc.workers = 1;
    const Design design(md, fc.mode == FitMode::perfect_diag ? 1.0 : fc.p,
                        fc.mode == FitMode::perfect_diag ? 1.0 : fc.q);
    FittedModel fitted = fit(design, fc);
    rec.converged = fitted.converged;
    rec.n_iter = fitted.n_iter;
    rec.theta = fitted.theta.theta();
    for (double t : config.curve_grid) {
      rec.lambda_curve.push_back(fitted.lambda.cumulative(t));
      rec.nu_curve.push_back(fitted.nu.cumulative(t));
    }
    rec.ok = true;
    if (config.compute_se && fitted.converged) {
      try {
        ProfileConfig pc = config.profile;
        pc.workers = 1;
        const ProfileSe se = profile_se(design, fitted, pc);
        attach_se(fitted, se);
        rec.se = *fitted.se;
      } catch (const std::exception& e) {
        rec.error = std::string("standard errors: ") + e.what();
      }
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

const ParamSummary& MethodSummary::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw InvalidInput("no summary for parameter '" + name + "'");
}

const MethodSummary& SimSummary::method(Method m) const {
  for (const auto& s : methods)
    if (s.method == m) return s;
  throw InvalidInput("no summary for method '" + to_string(m) + "'");
}

SimSummary summarize(const SimSetting& setting, std::size_t n_reps, std::vector<ReplicateRecord> records,
                     const ReplicateConfig& config) {
  SimSummary out;
  out.setting = setting;
  out.n_reps = n_reps;
  std::vector<double> truth = setting.beta_true;
  truth.insert(truth.end(), setting.gamma_true.begin(), setting.gamma_true.end());
  truth.push_back(setting.sigma2_true);
  const auto names = parameter_names(setting.beta_true.size());
  constexpr double z = 1.959963984540054;

  for (Method m : config.methods) {
    MethodSummary ms;
    ms.method = m;
    ms.n_reps = n_reps;
    ms.curve_grid = config.curve_grid;
    std::vector<const ReplicateRecord*> used;
    for (const auto& r : records) {
      if (r.method != m) continue;
      if (r.ok) ++ms.n_ok;
      if (r.ok && r.converged) {
        ++ms.n_converged;
        used.push_back(&r);
      }
    }
    ms.convergence_rate = n_reps > 0 ? static_cast<double>(ms.n_converged) / static_cast<double>(n_reps) : 0.0;
    const std::size_t n_par = m == Method::no_rand_eff ? truth.size() - 1 : truth.size();
    for (std::size_t k = 0; k < n_par; ++k) {
      ParamSummary ps;
      ps.name = names[k];
      ps.truth = truth[k];
      ps.n_used = used.size();
      std::vector<double> est, se;
      std::size_t covered = 0;
      for (const auto* r : used) {
        est.push_back(r->theta[k]);
        if (!r->se.empty()) {
          se.push_back(r->se[k]);
          if (std::abs(r->theta[k] - truth[k]) <= z * r->se[k]) ++covered;
        }
      }
      if (!est.empty()) {
        const double mu = mean(est);
        ps.bias = mu - truth[k];
        if (est.size() > 1) {
          double ss = 0.0;
          for (double e : est) ss += (e - mu) * (e - mu);
          ps.sd = std::sqrt(ss / static_cast<double>(est.size() - 1));
        }
      }
      if (!se.empty()) {
        ps.mean_se = mean(se);
        ps.cp = static_cast<double>(covered) / static_cast<double>(se.size());
      }
      ms.params.push_back(ps);
    }
    ms.mean_lambda.assign(config.curve_grid.size(), 0.0);
    ms.mean_nu.assign(config.curve_grid.size(), 0.0);
    for (const auto* r : used)
      for (std::size_t g = 0; g < config.curve_grid.size(); ++g) {
        ms.mean_lambda[g] += r->lambda_curve[g] / static_cast<double>(used.size());
        ms.mean_nu[g] += r->nu_curve[g] / static_cast<double>(used.size());
      }
    out.methods.push_back(std::move(ms));
  }
  out.records = std::move(records);
  return out;
}

SimSummary replicate(const SimSetting& setting, std::size_t n_reps, const ReplicateConfig& config) {
  setting.validate();
  if (n_reps < 1) throw InvalidInput("n_reps must be at least 1");
  if (config.methods.empty()) throw InvalidInput("no methods requested");
  const std::size_t M = config.methods.size();
  std::vector<ReplicateRecord> records(n_reps * M);
  std::mutex mu;
  std::size_t done = 0;
  parallel_for(n_reps, config.workers, [&](std::size_t rep) {
    const Dataset data = generate_dataset(setting, rep);
    for (std::size_t k = 0; k < M; ++k)
      records[rep * M + k] = run_method(setting, data, rep, config.methods[k], config);
    if (config.progress) {
      std::lock_guard<std::mutex> lock(mu);
      config.progress(rep, ++done);
    }
  });
  return summarize(setting, n_reps, std::move(records), config);
}

}  // namespace icsurv::sim
