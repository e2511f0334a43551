#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icsurv/core.hpp"
#include "icsurv/likelihood.hpp"
#include "icsurv/quadrature.hpp"

namespace icsurv {

/// Numerical breakdown inside the algorithm (singular Hessian, empty risk set,
/// impossible posterior). Carries the EM iteration when known.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int iteration = -1)
      : std::runtime_error(iteration >= 0 ? what + " (iteration " + std::to_string(iteration) + ")"
                                          : what),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

enum class FitMode { full, no_rand_eff, perfect_diag };

std::string to_string(FitMode mode);
FitMode parse_fit_mode(const std::string& s);

struct FitConfig {
  double tol = 5e-4;
  int max_iter = 2000;
  std::size_t quad_points = 20;
  FitMode mode = FitMode::full;
  /// Known diagnosis accuracy; pinned to 1 in perfect_diag mode.
  double p = 1.0;
  double q = 1.0;
  /// Empty means zeros.
  std::vector<double> init_beta;
  std::vector<double> init_gamma;
  double init_sigma2 = 0.2;
  /// Warm start; default jump sizes are 1/|support|.
  std::optional<BaselineHazard> init_lambda;
  std::optional<BaselineHazard> init_nu;
  double sigma2_floor = 1e-8;
  int max_halvings = 10;
  double ascent_slack = 1e-8;
  /// Squared extrapolation between EM steps; each iteration then spans two or
  /// three EM maps. The ascent check is applied to every accepted iterate.
  bool accelerate = true;
  std::size_t workers = 1;

  void validate() const;
};

/// Per-subject E-step summaries.
struct SubjectPosterior {
  std::vector<double> weights;  ///< [s * K + k], sums to 1
  double loglik = 0.0;          ///< log normalizer = log-likelihood contribution
  double e_b2 = 0.0;            ///< E[b^2]
  double e_exp_b = 0.0;         ///< E[e^b]
  std::vector<double> risk_exp_b;  ///< E[1(R_S >= t_j) e^b], j < n_lambda
  std::vector<double> poisson;     ///< E[U_j 1(R_S >= t_j)], j < n_lambda
};

struct Posterior {
  ModelParams params;  ///< parameters the expectations were taken at
  NormalGrid grid;
  std::vector<SubjectPosterior> subjects;
  std::vector<SubjectState> states;
  double loglik = 0.0;
};

/// Expectations under the current parameters. Throws NumericalError when some
/// subject has zero likelihood. Covariate exponentials are copied from
/// `previous` when its coefficients match.
Posterior e_step(const Design& design, const ModelParams& params, std::span<const double> lambda,
                 std::span<const double> nu, const NormalGrid& grid, std::size_t workers = 1,
                 const Posterior* previous = nullptr);

/// One Newton-Raphson step on the terminal-event score; returns the new gamma.
std::vector<double> update_gamma(const Design& design, const Posterior& post,
                                 std::span<const double> gamma_current, int iteration = -1);
/// One Newton-Raphson step on the Poisson-weighted disease score.
std::vector<double> update_beta(const Design& design, const Posterior& post,
                                std::span<const double> beta_current, int iteration = -1);
double update_sigma2(const Posterior& post);

struct JumpSizes {
  std::vector<double> nu;
  std::vector<double> lambda;
};
/// Breslow-type closed-form jump sizes at the given coefficients.
JumpSizes update_jumps(const Design& design, const Posterior& post, std::span<const double> beta,
                       std::span<const double> gamma);

struct FittedModel {
  ModelParams theta;
  BaselineHazard lambda;
  BaselineHazard nu;
  std::vector<double> loglik_trace;
  bool converged = false;
  int n_iter = 0;
  FitMode mode = FitMode::full;
  std::size_t quad_points = 20;
  std::vector<std::string> warnings;
  std::optional<std::vector<double>> se;
  std::optional<Eigen::MatrixXd> covariance;

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
  /// Indices into theta() that were estimated (sigma2 is excluded when pinned).
  std::vector<std::size_t> free_parameters() const;
};

/// NPMLE by EM. Convergence: max |change| in (beta, gamma, sigma2) < tol.
/// Returns the last iterate with converged = false when max_iter is reached.
FittedModel fit(const Dataset& data, const FitConfig& config);
FittedModel fit(const Design& design, const FitConfig& config);

/// Baseline-only EM with theta held fixed.
struct BaselineFit {
  std::vector<double> lambda;
  std::vector<double> nu;
  std::vector<double> subject_loglik;
  double loglik = 0.0;
  bool converged = false;
  int n_iter = 0;
};

struct BaselineFitConfig {
  /// Stop when the log-likelihood gain of one iteration drops below
  /// rel_tol * |loglik|.
  double rel_tol = 1e-10;
  int max_iter = 5000;
  bool accelerate = true;
  std::size_t workers = 1;
};

BaselineFit fit_baselines(const Design& design, const ModelParams& params,
                          std::span<const double> lambda0, std::span<const double> nu0,
                          const NormalGrid& grid, const BaselineFitConfig& config);

/// Mode-adjusted parameters and grid used by fit().
ModelParams effective_params(const ModelParams& params, FitMode mode);
NormalGrid fit_grid(const QuadratureRule& rule, double sigma2, FitMode mode);

}  // namespace icsurv
