#include "icsurv/inference.hpp"

#include <cmath>

#include "icsurv/parallel.hpp"

namespace icsurv {

void ProfileConfig::validate() const {
  if (!(h_multiplier > 0.0)) throw InvalidInput("h_multiplier must be positive");
  if (!(inner.rel_tol > 0.0) || inner.max_iter < 1) throw InvalidInput("invalid inner profile settings");
}

ProfileValue profile_loglik(const Design& design, const ModelParams& theta_fixed,
                            const BaselineHazard& lambda0, const BaselineHazard& nu0,
                            std::size_t quad_points, const ProfileConfig& config) {
  config.validate();
  validate_params(theta_fixed, design.dim());
  const QuadratureRule rule = gauss_hermite(quad_points);
  const NormalGrid grid = normal_grid(rule, theta_fixed.sigma2);
  const auto lam = project_onto_support(lambda0, design.lambda_support());
  const auto nu = project_onto_support(nu0, design.nu_support());
  BaselineFit bf = fit_baselines(design, theta_fixed, lam, nu, grid, config.inner);
  if (!bf.converged)
    throw NumericalError("profile likelihood: baseline EM did not converge in " +
                         std::to_string(config.inner.max_iter) + " iterations");
  ProfileValue out;
  out.value = bf.loglik;
  out.subject_values = std::move(bf.subject_loglik);
  out.lambda = std::move(bf.lambda);
  out.nu = std::move(bf.nu);
  out.n_iter = bf.n_iter;
  return out;
}

ProfileSe profile_se(const Design& design, const FittedModel& fitted, const ProfileConfig& config) {
  config.validate();
  const std::size_t n = design.size();
  ProfileSe out;
  out.parameters = fitted.free_parameters();
  const std::size_t P = out.parameters.size();
  out.h = config.h_multiplier / std::sqrt(static_cast<double>(n));

  const std::vector<double> theta_hat = fitted.theta.theta();
  std::vector<ModelParams> points(P + 1, fitted.theta);
  for (std::size_t k = 0; k < P; ++k) {
    std::vector<double> t = theta_hat;
    t[out.parameters[k]] += out.h;
    points[k + 1].set_theta(t);
  }
  std::vector<ProfileValue> values(P + 1);
  ProfileConfig inner_cfg = config;
  inner_cfg.inner.workers = config.workers;
  values[0] = profile_loglik(design, points[0], fitted.lambda, fitted.nu, fitted.quad_points, inner_cfg);
  // The perturbed fits start from the baselines profiled at theta-hat, which
  // are closer to their optima than the outer fit's last iterate.
  const BaselineHazard lam0{design.lambda_support(), values[0].lambda};
  const BaselineHazard nu0{design.nu_support(), values[0].nu};
  inner_cfg.inner.workers = 1;
  parallel_for(P, config.workers, [&](std::size_t k) {
    values[k + 1] = profile_loglik(design, points[k + 1], lam0, nu0, fitted.quad_points, inner_cfg);
  });
  out.base_value = values[0].value;

  out.scores.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(P));
  for (std::size_t k = 0; k < P; ++k)
    for (std::size_t i = 0; i < n; ++i)
      out.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          (values[k + 1].subject_values[i] - values[0].subject_values[i]) / out.h;

  const Eigen::MatrixXd info = out.scores.transpose() * out.scores;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw NumericalError("profile scores give a singular information matrix; increase h_multiplier "
                         "or check parameter identifiability");
  out.covariance = llt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P)));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.se.resize(P);
  for (std::size_t k = 0; k < P; ++k) {
    const double v = out.covariance(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    if (!(v > 0.0)) throw NumericalError("profile covariance has a nonpositive diagonal entry");
    out.se[k] = std::sqrt(v);
  }
  return out;
}

ProfileSe profile_se(const Dataset& data, const FittedModel& fitted, const ProfileConfig& config) {
  const Design design(data, fitted.theta.p, fitted.theta.q);
  return profile_se(design, fitted, config);
}

void attach_se(FittedModel& fitted, const ProfileSe& se) {
  const std::size_t full = fitted.theta.theta().size();
  std::vector<double> s(full, 0.0);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(full), static_cast<Eigen::Index>(full));
  for (std::size_t a = 0; a < se.parameters.size(); ++a) {
    s[se.parameters[a]] = se.se[a];
    for (std::size_t b = 0; b < se.parameters.size(); ++b)
      cov(static_cast<Eigen::Index>(se.parameters[a]), static_cast<Eigen::Index>(se.parameters[b])) =
          se.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  fitted.se = std::move(s);
  fitted.covariance = std::move(cov);
}

}  // namespace icsurv
