#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "icsurv/em.hpp"

namespace icsurv {

struct ProfileConfig {
  /// h_n = h_multiplier / sqrt(n).
  double h_multiplier = 1.0;
  BaselineFitConfig inner{.rel_tol = 1e-8};
  std::size_t workers = 1;

  void validate() const;
};

struct ProfileValue {
  double value = 0.0;
  std::vector<double> subject_values;  ///< pl_i
  std::vector<double> lambda;
  std::vector<double> nu;
  int n_iter = 0;
};

/// Profile log-likelihood: baselines re-estimated by EM with theta fixed,
/// warm-started from (lambda0, nu0). Throws NumericalError if the inner fit
/// does not converge within inner.max_iter.
ProfileValue profile_loglik(const Design& design, const ModelParams& theta_fixed,
                            const BaselineHazard& lambda0, const BaselineHazard& nu0,
                            std::size_t quad_points, const ProfileConfig& config);

struct ProfileSe {
  std::vector<std::size_t> parameters;  ///< indices into theta() that were perturbed
  std::vector<double> se;               ///< aligned with `parameters`
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd scores;               ///< n x parameters.size()
  double h = 0.0;
  double base_value = 0.0;
};

/// Forward-difference profile scores and the inverse of their outer-product sum.
ProfileSe profile_se(const Design& design, const FittedModel& fitted, const ProfileConfig& config);
ProfileSe profile_se(const Dataset& data, const FittedModel& fitted, const ProfileConfig& config);

/// Stores se/covariance on `fitted` (full theta layout; pinned entries are 0).
void attach_se(FittedModel& fitted, const ProfileSe& se);

}  // namespace icsurv
