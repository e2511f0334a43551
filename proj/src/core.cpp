#include "icsurv/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace icsurv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string subject_tag(const Subject& s) { return "subject '" + s.id + "': "; }

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

CovariatePath CovariatePath::tabulated(std::vector<double> times, std::vector<double> values,
                                       std::size_t dim) {
  if (times.empty()) throw InvalidInput("covariate path needs a baseline measurement at time 0");
  if (times.front() != 0.0) throw InvalidInput("covariate path must start at time 0");
  if (values.size() != times.size() * dim)
    throw InvalidInput("covariate path: values do not match times x dim");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1]))
      throw InvalidInput("covariate path: measurement times must be strictly ascending");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidInput("covariate path: non-finite value");
  CovariatePath path;
  path.dim_ = dim;
  path.times_ = std::move(times);
  path.values_ = std::move(values);
  return path;
}

CovariatePath CovariatePath::constant(std::vector<double> row) {
  const std::size_t d = row.size();
  return tabulated({0.0}, std::move(row), d);
}

CovariatePath CovariatePath::analytic(std::size_t dim, Evaluator fn) {
  CovariatePath path;
  path.dim_ = dim;
  path.fn_ = std::make_shared<const Evaluator>(std::move(fn));
  return path;
}

void CovariatePath::eval(double t, std::span<double> out) const {
  if (fn_) {
    (*fn_)(t, out);
    return;
  }
  // Largest measurement time <= t; the baseline row covers t < 0 as well.
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t row = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(row * dim_), dim_, out.begin());
}

std::vector<double> CovariatePath::eval(double t) const {
  std::vector<double> out(dim_);
  eval(t, out);
  return out;
}

CovariatePath CovariatePath::tabulate(const std::vector<double>& grid) const {
  std::vector<double> values(grid.size() * dim_);
  for (std::size_t k = 0; k < grid.size(); ++k)
    eval(grid[k], std::span<double>(values.data() + k * dim_, dim_));
  return tabulated(grid, std::move(values), dim_);
}

bool CovariatePath::operator==(const CovariatePath& other) const {
  if (fn_ || other.fn_) return fn_ == other.fn_ && dim_ == other.dim_;
  return dim_ == other.dim_ && times_ == other.times_ && values_ == other.values_;
}

std::vector<double> eval_covariates(const CovariatePath& path, double t) { return path.eval(t); }

void validate_subject(const Subject& s) {
  const std::string tag = subject_tag(s);
  if (!(s.y > 0.0) || !std::isfinite(s.y)) throw InvalidInput(tag + "follow-up time y must be positive");
  if (s.delta != 0 && s.delta != 1) throw InvalidInput(tag + "delta must be 0 or 1");
  if (s.autopsy_done != 0 && s.autopsy_done != 1)
    throw InvalidInput(tag + "autopsy_done must be 0 or 1");
  if (s.autopsy_positive != 0 && s.autopsy_positive != 1)
    throw InvalidInput(tag + "autopsy_positive must be 0 or 1");
  if (s.delta == 0 && s.autopsy_done == 1)
    throw InvalidInput(tag + "autopsy recorded for a subject without a terminal event");
  if (s.autopsy_done == 0 && s.autopsy_positive == 1)
    throw InvalidInput(tag + "autopsy result recorded without an autopsy");
  if (s.monitor_times.size() != s.diagnoses.size())
    throw InvalidInput(tag + "diagnoses and monitoring times differ in length");
  for (std::size_t j = 0; j < s.monitor_times.size(); ++j) {
    const double t = s.monitor_times[j];
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidInput(tag + "monitoring times must be positive");
    if (j > 0 && !(t > s.monitor_times[j - 1]))
      throw InvalidInput(tag + "monitoring times must be strictly ascending");
    if (t > s.y) throw InvalidInput(tag + "visit at time " + std::to_string(t) + " after follow-up y");
    if (s.diagnoses[j] != 0 && s.diagnoses[j] != 1)
      throw InvalidInput(tag + "diagnosis must be 0 or 1");
  }
  if (s.covariates.dim() == 0) throw InvalidInput(tag + "missing covariates");
}

std::vector<double> ModelParams::theta() const {
  std::vector<double> out(beta);
  out.insert(out.end(), gamma.begin(), gamma.end());
  out.push_back(sigma2);
  return out;
}

void ModelParams::set_theta(std::span<const double> theta) {
  const std::size_t d = beta.size();
  if (theta.size() != 2 * d + 1) throw InvalidInput("theta has wrong length");
  std::copy_n(theta.begin(), d, beta.begin());
  std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(d), d, gamma.begin());
  sigma2 = theta[2 * d];
}

void validate_params(const ModelParams& params, std::size_t dim, bool allow_zero_sigma2) {
  if (params.beta.size() != dim || params.gamma.size() != dim)
    throw InvalidInput("coefficient dimension does not match covariate dimension " + std::to_string(dim));
  for (double v : params.beta)
    if (!std::isfinite(v)) throw InvalidInput("non-finite beta");
  for (double v : params.gamma)
    if (!std::isfinite(v)) throw InvalidInput("non-finite gamma");
  if (!(params.p > 0.0 && params.p <= 1.0)) throw InvalidInput("sensitivity p must lie in (0, 1]");
  if (!(params.q > 0.0 && params.q <= 1.0)) throw InvalidInput("specificity q must lie in (0, 1]");
  if (std::abs(params.p + params.q - 1.0) < 1e-6)
    throw InvalidInput("sensitivity and specificity must satisfy p + q != 1 (diagnoses carry no information)");
  if (!(params.sigma2 >= 0.0) || !std::isfinite(params.sigma2))
    throw InvalidInput("random-effect variance must be nonnegative");
  if (!allow_zero_sigma2 && params.sigma2 == 0.0)
    throw InvalidInput("random-effect variance must be positive in this mode");
}

double BaselineHazard::cumulative(double t) const {
  const std::size_t m = count_upto(t);
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) sum += jump_sizes[j];
  return sum;
}

std::size_t BaselineHazard::count_upto(double t) const {
  return static_cast<std::size_t>(std::upper_bound(jump_times.begin(), jump_times.end(), t) -
                                  jump_times.begin());
}

Dataset::Dataset(std::vector<Subject> subjects) : subjects_(std::move(subjects)) {
  if (subjects_.empty()) throw InvalidInput("dataset has no subjects");
  dim_ = subjects_.front().covariates.dim();
  std::vector<double> deaths;
  std::vector<double> visits;
  for (const auto& s : subjects_) {
    validate_subject(s);
    if (s.covariates.dim() != dim_)
      throw InvalidInput(subject_tag(s) + "covariate dimension differs from the rest of the dataset");
    tau_ = std::max(tau_, s.y);
    if (s.delta == 1) deaths.push_back(s.y);
    visits.insert(visits.end(), s.monitor_times.begin(), s.monitor_times.end());
    if (s.has_autopsy()) visits.push_back(s.y);
  }
  death_support_ = sorted_unique(std::move(deaths));
  disease_support_ = sorted_unique(std::move(visits));
}

bool OnsetInterval::finite() const { return std::isfinite(right); }

OnsetInterval AugmentedSchedule::interval(std::size_t s) const {
  OnsetInterval iv;
  iv.index = s;
  iv.left = s == 0 ? 0.0 : times[s - 1];
  iv.right = s < times.size() ? times[s] : kInf;
  iv.risk_end = iv.finite() ? iv.right : iv.left;
  return iv;
}

std::vector<OnsetInterval> AugmentedSchedule::admissible() const {
  std::vector<OnsetInterval> out;
  for (std::size_t s = 0; s < interval_count(); ++s) {
    if (perfect_visit != static_cast<std::size_t>(-1)) {
      // Visit v (0-based) precedes onset iff v < s.
      const bool pre_onset = perfect_visit < s;
      const bool positive = diagnoses[perfect_visit] == 1;
      if (positive == pre_onset) continue;
    }
    out.push_back(interval(s));
  }
  return out;
}

AugmentedSchedule apply_autopsy_augmentation(const Subject& subject) {
  AugmentedSchedule sched;
  sched.times = subject.monitor_times;
  sched.diagnoses = subject.diagnoses;
  if (subject.has_autopsy()) {
    sched.perfect_visit = sched.times.size();
    sched.times.push_back(subject.y);
    sched.diagnoses.push_back(subject.autopsy_positive);
  }
  return sched;
}

}  // namespace icsurv
