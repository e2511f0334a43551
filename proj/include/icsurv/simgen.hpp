#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "icsurv/core.hpp"
#include "icsurv/em.hpp"
#include "icsurv/inference.hpp"
#include "icsurv/rng.hpp"

namespace icsurv::sim {

struct SimSetting {
  std::size_t n = 500;
  double p = 0.9;
  double q = 0.6;
  double r = 0.5;  ///< P(autopsy | death)
  double sigma2_true = 0.25;
  std::vector<double> beta_true{0.5, 0.5};
  std::vector<double> gamma_true{0.5, -0.5};
  std::uint64_t seed = 20240611;

  int n_visits = 6;
  double visit_min_gap = 0.1;
  double visit_gap_width = 2.0;
  double censor_lo = 3.0;
  double censor_hi = 9.0;
  double censor_cap = 6.0;
  /// Event times beyond this are reported as +inf (never observable: the
  /// horizon must exceed censor_cap).
  double time_horizon = 50.0;

  void validate() const;
};

struct LatentTruth {
  double t = 0.0;  ///< disease onset T
  double d = 0.0;  ///< death D
  double b = 0.0;
  double c = 0.0;  ///< censoring C
};

struct GeneratedSubject {
  Subject subject;
  LatentTruth truth;
};

/// Covariate process: X1 constant, X2(t) = c sin(0.2 a t + u).
CovariatePath simulation_covariates(double x1, double a, double u, double c);

/// Cumulative hazard  int_0^t h0(s) exp(coef' X(s) + b) ds  by adaptive Simpson.
double cumulative_hazard(const std::function<double(double)>& baseline_hazard, const CovariatePath& x,
                         const std::vector<double>& coef, double b, double t, double abs_tol = 1e-8);

/// Smallest t with H(t) = target by bracketed root-finding on [0, horizon];
/// +inf when H(horizon) < target.
double invert_cumulative_hazard(const std::function<double(double)>& cumhaz, double target, double horizon);

/// Draws one subject. The number of draws per subject is fixed, so streams
/// stay aligned across settings that only change p, q or r.
GeneratedSubject generate_subject(const SimSetting& setting, Philox& rng, std::string id);

/// Subject i of replicate rep uses stream subject_stream(rep, i) under key setting.seed.
std::vector<GeneratedSubject> generate_replicate(const SimSetting& setting, std::uint64_t replicate);
Dataset generate_dataset(const SimSetting& setting, std::uint64_t replicate);

Subject transform_first_diag(const Subject& s);
Subject transform_last_diag(const Subject& s);
Dataset transform_dataset(const Dataset& data, Subject (*fn)(const Subject&));

enum class Method { proposed, first_diag, last_diag, no_rand_eff };
std::string to_string(Method m);
Method parse_method(const std::string& s);
inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::proposed, Method::first_diag, Method::last_diag,
                                     Method::no_rand_eff};
  return m;
}

/// Dataset and fit configuration a method uses on one generated replicate.
Dataset method_dataset(const Dataset& data, Method m);
FitConfig method_fit_config(const FitConfig& base, const SimSetting& setting, Method m);

struct ReplicateConfig {
  FitConfig fit;  ///< mode, p and q are set per method
  ProfileConfig profile;
  bool compute_se = true;
  std::vector<Method> methods = all_methods();
  /// Baseline curves are averaged over replicates on this grid.
  std::vector<double> curve_grid;
  std::size_t workers = 1;
  /// Called after each finished replicate (from worker threads, serialized).
  std::function<void(std::size_t rep, std::size_t done)> progress;

  ReplicateConfig();
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  Method method = Method::proposed;
  bool ok = false;
  bool converged = false;
  int n_iter = 0;
  double seconds = 0.0;
  std::string error;
  std::vector<double> theta;
  std::vector<double> se;  ///< empty when unavailable
  std::vector<double> lambda_curve;
  std::vector<double> nu_curve;
};

struct ParamSummary {
  std::string name;
  double truth = 0.0;
  std::size_t n_used = 0;
  double bias = 0.0;
  std::optional<double> sd;
  std::optional<double> mean_se;
  std::optional<double> cp;
};

struct MethodSummary {
  Method method = Method::proposed;
  std::size_t n_reps = 0;
  std::size_t n_ok = 0;
  std::size_t n_converged = 0;
  double convergence_rate = 0.0;
  std::vector<ParamSummary> params;
  std::vector<double> curve_grid;
  std::vector<double> mean_lambda;
  std::vector<double> mean_nu;

  const ParamSummary& param(const std::string& name) const;
};

struct SimSummary {
  SimSetting setting;
  std::size_t n_reps = 0;
  std::vector<MethodSummary> methods;
  std::vector<ReplicateRecord> records;  ///< ordered by (replicate, method)

  const MethodSummary& method(Method m) const;
};

std::vector<std::string> parameter_names(std::size_t dim);

/// Fits one method on one replicate; failures are captured in the record.
ReplicateRecord run_method(const SimSetting& setting, const Dataset& data, std::size_t replicate,
                           Method m, const ReplicateConfig& config);

/// Aggregates records; only converged fits enter bias/SD, and only those
/// with SEs enter SE/CP.
SimSummary summarize(const SimSetting& setting, std::size_t n_reps, std::vector<ReplicateRecord> records,
                     const ReplicateConfig& config);

SimSummary replicate(const SimSetting& setting, std::size_t n_reps, const ReplicateConfig& config);

}  // namespace icsurv::sim
