#pragma once

#include <string>
#include <vector>

#include "icsurv/core.hpp"
#include "icsurv/em.hpp"

namespace icsurv {

struct PopulationCurves {
  std::vector<double> grid;
  std::vector<double> cif;       ///< F(t) = P(T <= t, T <= D)
  std::vector<double> survival;  ///< S(t) = P(D > t)
};

/// Plug-in curves averaged over the dataset's covariate paths and the
/// fitted random-effect distribution. Grid points must lie in [0, tau].
PopulationCurves population_curves(const FittedModel& fitted, const Dataset& data,
                                   const std::vector<double>& grid);

struct PredictionQuery {
  std::string id;
  CovariatePath covariates;
  std::vector<double> times;    ///< Q_1..Q_k, ascending, Q_k <= t
  std::vector<int> diagnoses;   ///< xi_1..xi_k
  double t = 0.0;               ///< alive at t
  std::vector<double> horizon;  ///< ascending, each >= t

  void validate(std::size_t dim) const;
};

struct DynamicPrediction {
  std::vector<double> horizon;
  std::vector<double> survival;      ///< P(D > t* | history, D > t)
  std::vector<double> disease_free;  ///< P(D > t*, T > t* | history, D > t)
};

/// Both conditional curves; throws NumericalError when the history has zero
/// probability under the fitted model.
DynamicPrediction predict(const FittedModel& fitted, const PredictionQuery& query);
std::vector<double> dynamic_survival(const FittedModel& fitted, const PredictionQuery& query);
std::vector<double> dynamic_disease_free(const FittedModel& fitted, const PredictionQuery& query);

}  // namespace icsurv
