#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "icsurv/em.hpp"
#include "icsurv/predict.hpp"
#include "icsurv/simgen.hpp"

namespace icsurv::cli {

enum ExitCode : int { ok = 0, input_error = 1, not_converged = 2 };

/// Entry point shared by the executable and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args);

/// FNV-1a (64 bit) over the compact JSON dump of an effective configuration.
std::uint64_t config_hash(const nlohmann::json& config);
std::string hash_hex(std::uint64_t h);

nlohmann::json fitted_to_json(const FittedModel& fitted);
FittedModel fitted_from_json(const nlohmann::json& j);

FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig base = {});
ProfileConfig profile_config_from_json(const nlohmann::json& j, ProfileConfig base = {});
sim::SimSetting sim_setting_from_json(const nlohmann::json& j, sim::SimSetting base = {});
nlohmann::json to_json(const FitConfig& c);
nlohmann::json to_json(const ProfileConfig& c);
nlohmann::json to_json(const sim::SimSetting& s);

/// Queries file: {"queries": [{"id", "covariates": {"times", "values"} | {"constant"},
/// "history": {"times", "diagnoses"}, "t", "horizon"}]}.
std::vector<PredictionQuery> queries_from_json(const nlohmann::json& j);

/// Summary table: one row per parameter, Bias/SD/SE/CP columns per method.
void write_table1(const sim::SimSummary& summary, const std::filesystem::path& file, const std::string& header);
void write_replicates(const sim::SimSummary& summary, const std::filesystem::path& file, const std::string& header);

}  // namespace icsurv::cli
