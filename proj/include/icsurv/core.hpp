#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace icsurv {

/// Thrown for any violation of a data or parameter invariant.
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time-indexed covariate process X(t).
///
/// Two representations share one interface: a tabulated path evaluated as a
/// right-continuous step function (last observation carried forward), and an
/// analytic path backed by a callable, used when the generating process is
/// known exactly (simulation).
class CovariatePath {
 public:
  using Evaluator = std::function<void(double, std::span<double>)>;

  CovariatePath() = default;

  /// `values` is row-major, one row of `dim` values per entry of `times`.
  static CovariatePath tabulated(std::vector<double> times, std::vector<double> values,
                                 std::size_t dim);
  static CovariatePath constant(std::vector<double> row);
  static CovariatePath analytic(std::size_t dim, Evaluator fn);

  std::size_t dim() const { return dim_; }
  bool is_tabulated() const { return !fn_; }

  void eval(double t, std::span<double> out) const;
  std::vector<double> eval(double t) const;

  /// Tabulated representation only.
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

  /// Tabulate on `grid` (must start at 0, strictly ascending).
  CovariatePath tabulate(const std::vector<double>& grid) const;

  bool operator==(const CovariatePath& other) const;

 private:
  std::size_t dim_ = 0;
  std::vector<double> times_;
  std::vector<double> values_;
  std::shared_ptr<const Evaluator> fn_;
};

/// LOCF evaluation of a covariate path.
std::vector<double> eval_covariates(const CovariatePath& path, double t);

struct Subject {
  std::string id;
  CovariatePath covariates;
  std::vector<double> monitor_times;
  std::vector<int> diagnoses;
  double y = 0.0;
  int delta = 0;
  int autopsy_done = 0;
  int autopsy_positive = 0;

  bool has_autopsy() const { return delta == 1 && autopsy_done == 1; }
  std::size_t n_visits() const { return monitor_times.size(); }

  bool operator==(const Subject&) const = default;
};

/// Throws InvalidInput naming the subject on any invariant breach.
void validate_subject(const Subject& s);

struct ModelParams {
  std::vector<double> beta;
  std::vector<double> gamma;
  double sigma2 = 0.0;
  double p = 1.0;
  double q = 1.0;

  std::size_t dim() const { return beta.size(); }
  /// Finite-dimensional part (beta, gamma, sigma2) flattened in that order.
  std::vector<double> theta() const;
  void set_theta(std::span<const double> theta);
};

/// Rejects p, q outside (0, 1], p + q == 1 (within 1e-6), negative sigma2,
/// mismatched coefficient dimensions, and non-finite values.
void validate_params(const ModelParams& params, std::size_t dim, bool allow_zero_sigma2 = true);

/// Nondecreasing step function with jumps at `jump_times`.
struct BaselineHazard {
  std::vector<double> jump_times;
  std::vector<double> jump_sizes;

  std::size_t size() const { return jump_times.size(); }
  /// Sum of jump sizes at times <= t.
  double cumulative(double t) const;
  /// Number of jump times <= t.
  std::size_t count_upto(double t) const;

  bool operator==(const BaselineHazard&) const = default;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Subject> subjects);

  std::size_t size() const { return subjects_.size(); }
  std::size_t dim() const { return dim_; }
  double tau() const { return tau_; }
  const std::vector<Subject>& subjects() const { return subjects_; }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }

  /// Sorted distinct death times {Y_i : delta_i = 1}; support of V.
  const std::vector<double>& death_support() const { return death_support_; }
  /// Sorted distinct {Q_ij} together with autopsy times; support of Lambda.
  const std::vector<double>& disease_support() const { return disease_support_; }

 private:
  std::vector<Subject> subjects_;
  std::size_t dim_ = 0;
  double tau_ = 0.0;
  std::vector<double> death_support_;
  std::vector<double> disease_support_;
};

/// One admissible interval (left, right] of the latent onset index S.
struct OnsetInterval {
  std::size_t index = 0;  ///< S in the augmented schedule
  double left = 0.0;
  double right = 0.0;     ///< +inf for the open last interval
  double risk_end = 0.0;  ///< R_S: right if finite, else left
  bool finite() const;
};

/// Monitoring schedule after folding in an autopsy as a perfectly accurate
/// virtual visit at Y.
struct AugmentedSchedule {
  std::vector<double> times;
  std::vector<int> diagnoses;
  /// Index of the perfect-accuracy visit, or npos.
  std::size_t perfect_visit = static_cast<std::size_t>(-1);

  /// Raw intervals S = 0..times.size(); (Q_S, Q_{S+1}] with Q_0 = 0.
  std::size_t interval_count() const { return times.size() + 1; }
  /// Intervals not excluded by the perfect-accuracy visit.
  std::vector<OnsetInterval> admissible() const;
  OnsetInterval interval(std::size_t s) const;
};

AugmentedSchedule apply_autopsy_augmentation(const Subject& subject);

}  // namespace icsurv
