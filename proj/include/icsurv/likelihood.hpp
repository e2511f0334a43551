#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "icsurv/core.hpp"
#include "icsurv/quadrature.hpp"

namespace icsurv {

// ---------------------------------------------------------------------------
// Direct kernels. These evaluate covariates on demand and are used for
// prediction, validation and as the reference against the design engine.
// ---------------------------------------------------------------------------

/// sum_{t_j <= t} size_j * exp(lp(t_j)).
double cumhaz_at(const BaselineHazard& hazard, const std::function<double(double)>& lp, double t);

/// cumhaz_at with lp(s) = coef' X(s) + offset.
double cumhaz_at(const BaselineHazard& hazard, const CovariatePath& x, std::span<const double> coef,
                 double offset, double t);

/// P(T in interval s | X, b) on the autopsy-augmented schedule.
double interval_prob(const Subject& subject, const ModelParams& params, const BaselineHazard& lambda,
                     double b, std::size_t s);

/// P(xi | T in interval s): visits j <= s are pre-onset, later ones post-onset.
double diagnosis_prob(std::span<const int> xi, std::size_t s, double p, double q);

/// As above with the schedule's perfect-accuracy visit (if any) at p = q = 1.
double diagnosis_prob(const AugmentedSchedule& schedule, std::size_t s, double p, double q);

/// log L(O_i, S = s, b) without the normal density weight.
/// Returns -inf when the interval carries no mass.
double joint_factor(const Subject& subject, const ModelParams& params, const BaselineHazard& lambda,
                    const BaselineHazard& nu, double b, std::size_t s);

// ---------------------------------------------------------------------------
// Design engine: covariates pre-evaluated at the jump supports.
// ---------------------------------------------------------------------------

struct IntervalDesign {
  std::size_t index = 0;    ///< S in the augmented schedule
  std::size_t lo = 0;       ///< # lambda jumps <= left end
  std::size_t hi = 0;       ///< # lambda jumps <= right end (finite only)
  std::size_t risk_count = 0;  ///< # lambda jumps <= R_S
  bool finite = true;
  double log_diag = 0.0;
};

struct SubjectDesign {
  std::size_t n_lambda = 0;  ///< lambda jumps at or before the last finite endpoint
  std::size_t n_nu = 0;      ///< nu jumps at or before y
  std::vector<double> x_lambda;  ///< column-major, d x n_lambda
  std::vector<double> x_nu;      ///< column-major, d x n_nu
  std::vector<double> x_death;   ///< X(y)
  int delta = 0;
  std::size_t death_jump = static_cast<std::size_t>(-1);  ///< index of y in the nu support
  std::vector<IntervalDesign> intervals;  ///< intervals with positive diagnosis probability
};

/// Per-subject quantities at one parameter value.
struct SubjectState {
  std::vector<double> elp_lambda;  ///< exp(beta' X(t_j)), j < n_lambda
  std::vector<double> elp_nu;      ///< exp(gamma' X(t_j)), j < n_nu
  std::vector<double> interval_mass;  ///< sum of lambda_j elp_j over each interval
  std::vector<double> lambda_before;  ///< cumulative hazard at each interval's left end (b = 0)
  double cum_nu = 0.0;     ///< V-part cumulative hazard at y (b = 0)
  double log_death = 0.0;  ///< delta * (log nu{y} + gamma' X(y))
  std::vector<double> log_terms;  ///< [s * K + k], log of joint factor times quadrature weight
  double loglik = 0.0;
};

class Design {
 public:
  /// Supports default to the dataset's jump sets.
  Design(const Dataset& data, double p, double q);
  Design(const Dataset& data, double p, double q, std::vector<double> lambda_support,
         std::vector<double> nu_support);

  std::size_t size() const { return subjects_.size(); }
  std::size_t dim() const { return dim_; }
  double p() const { return p_; }
  double q() const { return q_; }
  const std::vector<double>& lambda_support() const { return lambda_support_; }
  const std::vector<double>& nu_support() const { return nu_support_; }
  const SubjectDesign& subject(std::size_t i) const { return subjects_[i]; }
  const std::vector<SubjectDesign>& subjects() const { return subjects_; }
  /// Number of deaths at each nu support point.
  const std::vector<double>& death_counts() const { return death_counts_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }

  /// Fills `state` (log-likelihood, grid of log terms) for subject i.
  /// Fills `state` for subject i. With keep_elp_* set, state.elp_* already
  /// hold the covariate exponentials for params and are not recomputed.
  void evaluate(std::size_t i, const ModelParams& params, std::span<const double> lambda,
                std::span<const double> nu, const NormalGrid& grid, SubjectState& state,
                bool keep_elp_lambda = false, bool keep_elp_nu = false) const;

 private:
  std::size_t dim_ = 0;
  double p_ = 1.0, q_ = 1.0;
  std::vector<double> lambda_support_;
  std::vector<double> nu_support_;
  std::vector<double> death_counts_;
  std::vector<SubjectDesign> subjects_;
  std::vector<std::string> ids_;
};

/// Jump sizes of `hazard` laid onto `support` (zeros where it has no jump).
/// Throws if the hazard jumps outside the support.
std::vector<double> project_onto_support(const BaselineHazard& hazard,
                                         const std::vector<double>& support);

/// Per-subject log-likelihoods; index matches the dataset.
std::vector<double> subject_logliks(const Dataset& data, const ModelParams& params,
                                    const BaselineHazard& lambda, const BaselineHazard& nu,
                                    const QuadratureRule& rule);

/// Observed-data log-likelihood (nonparametric form with autopsy variant).
double observed_loglik(const Dataset& data, const ModelParams& params, const BaselineHazard& lambda,
                       const BaselineHazard& nu, const QuadratureRule& rule);

/// log(exp(-a) - exp(-u)) for 0 <= a <= u, given u - a = mass.
double log_interval_prob(double a, double mass, bool finite);

}  // namespace icsurv
