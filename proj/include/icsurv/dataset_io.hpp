#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "icsurv/core.hpp"

namespace icsurv {

/// File names used inside a dataset directory.
inline constexpr const char* kSubjectsFile = "subjects.csv";
inline constexpr const char* kVisitsFile = "visits.csv";
inline constexpr const char* kCovariatesFile = "covariates.csv";

/// Reads the three-table CSV layout:
///   subjects.csv   id,y,delta[,autopsy_done,autopsy_positive]
///   visits.csv     id,time,xi
///   covariates.csv id,time,x1,...,xd
/// Lines starting with '#' are comments. Errors carry file, line and subject id.
Dataset load_dataset(const std::filesystem::path& subjects_file,
                     const std::filesystem::path& visits_file,
                     const std::filesystem::path& covariates_file);
Dataset load_dataset(const std::filesystem::path& dir);

/// Analytic covariate paths are tabulated on `analytic_grid_step` (plus each
/// visit time and y) before writing. `header` lines are written as comments.
void write_dataset(const Dataset& data, const std::filesystem::path& dir,
                   const std::string& header = {}, double analytic_grid_step = 0.1);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace icsurv
