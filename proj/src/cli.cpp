#include "icsurv/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "icsurv/dataset_io.hpp"
#include "icsurv/inference.hpp"
#include "icsurv/parallel.hpp"

namespace icsurv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t config_hash(const json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& target) {
  if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

json hazard_json(const BaselineHazard& h) {
  return {{"times", h.jump_times}, {"sizes", h.jump_sizes}};
}

BaselineHazard hazard_from_json(const json& j) {
  BaselineHazard h;
  h.jump_times = j.at("times").get<std::vector<double>>();
  h.jump_sizes = j.at("sizes").get<std::vector<double>>();
  if (h.jump_times.size() != h.jump_sizes.size()) throw InvalidInput("baseline hazard: times and sizes differ in length");
  return h;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InvalidInput("cannot open " + p.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw InvalidInput(p.string() + ": " + e.what());
  }
}

std::ofstream open_output(const fs::path& p, const std::string& header, char comment = '#') {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw InvalidInput("cannot write " + p.string());
  if (!header.empty()) out << comment << ' ' << header << '\n';
  return out;
}

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "NA" : (v > 0 ? "Inf" : "-Inf")); }
std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::optional<double> tol;
  std::optional<std::size_t> quad_points;
  std::optional<std::string> mode;
  std::optional<int> max_iter;
  std::optional<double> p, q;
  std::optional<double> h_multiplier;
  bool no_se = false;
  bool verbose = false;
  std::string data;
  std::string fitted;
  std::string queries;
  std::optional<std::size_t> reps;
  std::optional<std::size_t> n;
  std::uint64_t replicate_index = 0;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--workers", o.workers, "worker threads (0 = all cores)");
  cmd->add_option("--tol", o.tol, "EM convergence tolerance on theta");
  cmd->add_option("--quad-points", o.quad_points, "Gauss-Hermite nodes");
  cmd->add_option("--mode", o.mode, "full | no_rand_eff | perfect_diag");
  cmd->add_option("--max-iter", o.max_iter, "maximum EM iterations");
  cmd->add_flag("-v,--verbose", o.verbose, "progress on stderr");
}

void add_fit_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--p", o.p, "diagnosis sensitivity");
  cmd->add_option("--q", o.q, "diagnosis specificity");
  cmd->add_option("--h-multiplier", o.h_multiplier, "profile step h = multiplier / sqrt(n)");
  cmd->add_flag("--no-se", o.no_se, "skip profile-likelihood standard errors");
}

FitConfig effective_fit_config(const json& cfg, const Options& o) {
  FitConfig fc = fit_config_from_json(cfg.value("fit", json::object()));
  if (o.tol) fc.tol = *o.tol;
  if (o.quad_points) fc.quad_points = *o.quad_points;
  if (o.mode) fc.mode = parse_fit_mode(*o.mode);
  if (o.max_iter) fc.max_iter = *o.max_iter;
  if (o.p) fc.p = *o.p;
  if (o.q) fc.q = *o.q;
  fc.workers = resolve_workers(o.workers);
  fc.validate();
  return fc;
}

ProfileConfig effective_profile_config(const json& cfg, const Options& o) {
  ProfileConfig pc = profile_config_from_json(cfg.value("profile", json::object()));
  if (o.h_multiplier) pc.h_multiplier = *o.h_multiplier;
  pc.workers = resolve_workers(o.workers);
  pc.validate();
  return pc;
}

sim::SimSetting effective_setting(const json& cfg, const Options& o) {
  sim::SimSetting s = sim_setting_from_json(cfg.value("simulation", json::object()));
  if (o.seed) s.seed = *o.seed;
  if (o.n) s.n = *o.n;
  s.validate();
  return s;
}

std::string header_line(const std::string& command, const json& effective, std::uint64_t seed) {
  return "icsurv " + command + " config_hash=" + hash_hex(config_hash(effective)) + " seed=" + std::to_string(seed);
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

int cmd_simulate(const json& cfg, const Options& o) {
  const sim::SimSetting s = effective_setting(cfg, o);
  json eff = {{"command", "simulate"}, {"simulation", to_json(s)}, {"replicate_index", o.replicate_index}};
  const std::string header = header_line("simulate", eff, s.seed);
  const auto gen = sim::generate_replicate(s, o.replicate_index);
  std::vector<Subject> subjects;
  for (const auto& g : gen) subjects.push_back(g.subject);
  const Dataset data(std::move(subjects));
  const fs::path out(o.out);
  write_dataset(data, out, header);
  auto tf = open_output(out / "truth.csv", header);
  tf << "id,onset,death,censoring,b\n";
  for (const auto& g : gen)
    tf << g.subject.id << ',' << fmt(g.truth.t) << ',' << fmt(g.truth.d) << ',' << fmt(g.truth.c) << ','
       << fmt(g.truth.b) << '\n';
  if (o.verbose) std::cerr << "wrote " << data.size() << " subjects to " << out << '\n';
  return ExitCode::ok;
}

void write_fit_outputs(const FittedModel& fitted, const fs::path& out, const std::string& header,
                       const json& eff, std::uint64_t seed) {
  json fj = fitted_to_json(fitted);
  fj["config_hash"] = hash_hex(config_hash(eff));
  fj["seed"] = seed;
  fj["config"] = eff;
  auto jf = open_output(out / "fitted.json", "");
  jf << fj.dump(2) << '\n';

  auto bf = open_output(out / "baselines.csv", header);
  bf << "hazard,time,jump,cumulative\n";
  const auto emit = [&](const char* name, const BaselineHazard& h) {
    double acc = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      acc += h.jump_sizes[j];
      bf << name << ',' << fmt(h.jump_times[j]) << ',' << fmt(h.jump_sizes[j]) << ',' << fmt(acc) << '\n';
    }
  };
  emit("disease", fitted.lambda);
  emit("death", fitted.nu);
}

int cmd_fit(const json& cfg, const Options& o) {
  const std::string data_path = !o.data.empty() ? o.data : cfg.value("data", std::string{});
  if (data_path.empty()) throw InvalidInput("fit needs a dataset directory (--data or \"data\" in the config)");
  const FitConfig fc = effective_fit_config(cfg, o);
  const ProfileConfig pc = effective_profile_config(cfg, o);
  const bool want_se = !o.no_se && cfg.value("compute_se", true);
  const std::uint64_t seed = o.seed ? *o.seed : cfg.value("seed", std::uint64_t{0});
  json eff = {{"command", "fit"}, {"data", data_path}, {"fit", to_json(fc)}, {"profile", to_json(pc)},
              {"compute_se", want_se}};
  eff["fit"].erase("workers");
  eff["profile"].erase("workers");
  const std::string header = header_line("fit", eff, seed);

  const Dataset data = load_dataset(data_path);
  {
    ModelParams probe;
    probe.beta.assign(data.dim(), 0.0);
    probe.gamma.assign(data.dim(), 0.0);
    probe.p = fc.mode == FitMode::perfect_diag ? 1.0 : fc.p;
    probe.q = fc.mode == FitMode::perfect_diag ? 1.0 : fc.q;
    validate_params(probe, data.dim());
  }
  const Design design(data, fc.mode == FitMode::perfect_diag ? 1.0 : fc.p,
                      fc.mode == FitMode::perfect_diag ? 1.0 : fc.q);
  if (o.verbose) std::cerr << "fitting " << data.size() << " subjects (" << to_string(fc.mode) << ")\n";
  FittedModel fitted = fit(design, fc);
  if (o.verbose)
    std::cerr << "EM " << (fitted.converged ? "converged" : "stopped") << " after " << fitted.n_iter
              << " iterations, log-likelihood " << fitted.loglik() << '\n';
  if (want_se && fitted.converged) {
    try {
      attach_se(fitted, profile_se(design, fitted, pc));
    } catch (const NumericalError& e) {
      fitted.warnings.push_back(std::string("standard errors unavailable: ") + e.what());
    }
  }
  for (const auto& w : fitted.warnings) warn(w);
  write_fit_outputs(fitted, fs::path(o.out), header, eff, seed);
  return fitted.converged ? ExitCode::ok : ExitCode::not_converged;
}

int cmd_predict(const json& cfg, const Options& o) {
  const json pcfg = cfg.value("predict", json::object());
  const std::string fitted_path = !o.fitted.empty() ? o.fitted : pcfg.value("fitted", std::string{});
  const std::string queries_path = !o.queries.empty() ? o.queries : pcfg.value("queries", std::string{});
  const std::string data_path = !o.data.empty() ? o.data : pcfg.value("data", std::string{});
  if (fitted_path.empty()) throw InvalidInput("predict needs a fitted model (--fitted)");
  if (queries_path.empty() && data_path.empty())
    throw InvalidInput("predict needs a query file (--queries) or a dataset for population curves (--data)");
  const json fj = read_json_file(fitted_path);
  const FittedModel fitted = fitted_from_json(fj);
  json eff = {{"command", "predict"}, {"fitted_hash", fj.value("config_hash", std::string{})},
              {"queries", queries_path}, {"data", data_path}};
  std::vector<double> grid;
  read_opt(pcfg, "population_grid", grid);
  eff["population_grid"] = grid;
  const std::uint64_t seed = fj.value("seed", std::uint64_t{0});
  const std::string header = header_line("predict", eff, seed);
  const fs::path out(o.out);

  if (!queries_path.empty()) {
    const auto queries = queries_from_json(read_json_file(queries_path));
    auto pf = open_output(out / "prediction.csv", header);
    pf << "query,t_star,survival,disease_free\n";
    for (const auto& q : queries) {
      const DynamicPrediction dp = predict(fitted, q);
      for (std::size_t g = 0; g < dp.horizon.size(); ++g)
        pf << q.id << ',' << fmt(dp.horizon[g]) << ',' << fmt(dp.survival[g]) << ',' << fmt(dp.disease_free[g])
           << '\n';
    }
  }
  if (!data_path.empty()) {
    const Dataset data = load_dataset(data_path);
    if (grid.empty()) {
      const int steps = 100;
      for (int k = 0; k <= steps; ++k) grid.push_back(data.tau() * k / steps);
    }
    const PopulationCurves pc = population_curves(fitted, data, grid);
    auto cf = open_output(out / "population.csv", header);
    cf << "t,cif,survival\n";
    for (std::size_t g = 0; g < grid.size(); ++g)
      cf << fmt(pc.grid[g]) << ',' << fmt(pc.cif[g]) << ',' << fmt(pc.survival[g]) << '\n';
  }
  return ExitCode::ok;
}

int cmd_replicate(const json& cfg, const Options& o) {
  const sim::SimSetting s = effective_setting(cfg, o);
  const json rcfg = cfg.value("replicate", json::object());
  std::size_t n_reps = rcfg.value("n_reps", std::size_t{2});
  if (o.reps) n_reps = *o.reps;
  if (n_reps < 1) throw InvalidInput("replicate: n_reps must be at least 1");
  sim::ReplicateConfig rc;
  rc.fit = effective_fit_config(cfg, o);
  rc.fit.workers = 1;
  rc.profile = effective_profile_config(cfg, o);
  rc.compute_se = !o.no_se && rcfg.value("compute_se", true);
  if (rcfg.contains("methods")) {
    rc.methods.clear();
    for (const auto& m : rcfg.at("methods")) rc.methods.push_back(sim::parse_method(m.get<std::string>()));
  }
  read_opt(rcfg, "curve_grid", rc.curve_grid);
  rc.workers = resolve_workers(o.workers);
  if (o.verbose)
    rc.progress = [n_reps](std::size_t rep, std::size_t done) {
      std::cerr << "replicate " << rep << " done (" << done << "/" << n_reps << ")\n";
    };

  json methods = json::array();
  for (auto m : rc.methods) methods.push_back(sim::to_string(m));
  json eff = {{"command", "replicate"},          {"simulation", to_json(s)},
              {"fit", to_json(rc.fit)},          {"profile", to_json(rc.profile)},
              {"n_reps", n_reps},                {"methods", methods},
              {"compute_se", rc.compute_se},     {"curve_grid", rc.curve_grid}};
  eff["fit"].erase("workers");
  eff["profile"].erase("workers");
  const std::string header = header_line("replicate", eff, s.seed);

  const sim::SimSummary summary = sim::replicate(s, n_reps, rc);
  const fs::path out(o.out);
  write_table1(summary, out / "table1.csv", header);
  write_replicates(summary, out / "replicates.csv", header);
  auto cf = open_output(out / "curves.csv", header);
  cf << "method,t,mean_lambda,true_lambda,mean_v,true_v\n";
  for (const auto& ms : summary.methods)
    for (std::size_t g = 0; g < ms.curve_grid.size(); ++g) {
      const double t = ms.curve_grid[g];
      cf << sim::to_string(ms.method) << ',' << fmt(t) << ',' << fmt(ms.mean_lambda[g]) << ','
         << fmt(std::log1p(0.25 * t)) << ',' << fmt(ms.mean_nu[g]) << ',' << fmt(0.01 * t * t) << '\n';
    }
  for (const auto& ms : summary.methods)
    if (ms.n_converged < ms.n_reps)
      warn(sim::to_string(ms.method) + ": " + std::to_string(ms.n_reps - ms.n_converged) +
           " replicate(s) failed or did not converge");
  return ExitCode::ok;
}

}  // namespace

FitConfig fit_config_from_json(const json& j, FitConfig c) {
  read_opt(j, "tol", c.tol);
  read_opt(j, "max_iter", c.max_iter);
  read_opt(j, "quad_points", c.quad_points);
  if (j.contains("mode")) c.mode = parse_fit_mode(j.at("mode").get<std::string>());
  read_opt(j, "p", c.p);
  read_opt(j, "q", c.q);
  read_opt(j, "init_beta", c.init_beta);
  read_opt(j, "init_gamma", c.init_gamma);
  read_opt(j, "init_sigma2", c.init_sigma2);
  read_opt(j, "sigma2_floor", c.sigma2_floor);
  read_opt(j, "max_halvings", c.max_halvings);
  read_opt(j, "accelerate", c.accelerate);
  return c;
}

ProfileConfig profile_config_from_json(const json& j, ProfileConfig c) {
  read_opt(j, "h_multiplier", c.h_multiplier);
  read_opt(j, "rel_tol", c.inner.rel_tol);
  read_opt(j, "max_iter", c.inner.max_iter);
  read_opt(j, "accelerate", c.inner.accelerate);
  return c;
}

sim::SimSetting sim_setting_from_json(const json& j, sim::SimSetting s) {
  read_opt(j, "n", s.n);
  read_opt(j, "p", s.p);
  read_opt(j, "q", s.q);
  read_opt(j, "r", s.r);
  read_opt(j, "sigma2_true", s.sigma2_true);
  read_opt(j, "beta_true", s.beta_true);
  read_opt(j, "gamma_true", s.gamma_true);
  read_opt(j, "seed", s.seed);
  read_opt(j, "n_visits", s.n_visits);
  read_opt(j, "visit_min_gap", s.visit_min_gap);
  read_opt(j, "visit_gap_width", s.visit_gap_width);
  read_opt(j, "censor_lo", s.censor_lo);
  read_opt(j, "censor_hi", s.censor_hi);
  read_opt(j, "censor_cap", s.censor_cap);
  read_opt(j, "time_horizon", s.time_horizon);
  return s;
}

json to_json(const FitConfig& c) {
  return {{"tol", c.tol},
          {"max_iter", c.max_iter},
          {"quad_points", c.quad_points},
          {"mode", to_string(c.mode)},
          {"p", c.p},
          {"q", c.q},
          {"init_beta", c.init_beta},
          {"init_gamma", c.init_gamma},
          {"init_sigma2", c.init_sigma2},
          {"sigma2_floor", c.sigma2_floor},
          {"max_halvings", c.max_halvings},
          {"accelerate", c.accelerate},
          {"workers", c.workers}};
}

json to_json(const ProfileConfig& c) {
  return {{"h_multiplier", c.h_multiplier},
          {"rel_tol", c.inner.rel_tol},
          {"max_iter", c.inner.max_iter},
          {"accelerate", c.inner.accelerate},
          {"workers", c.workers}};
}

json to_json(const sim::SimSetting& s) {
  return {{"n", s.n},
          {"p", s.p},
          {"q", s.q},
          {"r", s.r},
          {"sigma2_true", s.sigma2_true},
          {"beta_true", s.beta_true},
          {"gamma_true", s.gamma_true},
          {"seed", s.seed},
          {"n_visits", s.n_visits},
          {"visit_min_gap", s.visit_min_gap},
          {"visit_gap_width", s.visit_gap_width},
          {"censor_lo", s.censor_lo},
          {"censor_hi", s.censor_hi},
          {"censor_cap", s.censor_cap},
          {"time_horizon", s.time_horizon}};
}

json fitted_to_json(const FittedModel& f) {
  const std::size_t d = f.theta.dim();
  const auto names = sim::parameter_names(d);
  const auto theta = f.theta.theta();
  const auto free = f.free_parameters();
  json params = json::array();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    json p = {{"name", names[k]}, {"estimate", theta[k]}};
    const bool estimated = std::find(free.begin(), free.end(), k) != free.end();
    p["estimated"] = estimated;
    if (f.se && estimated && (*f.se)[k] > 0.0) {
      const double se = (*f.se)[k];
      const double z = theta[k] / se;
      p["se"] = se;
      p["z"] = z;
      p["p_value"] = std::erfc(std::abs(z) / std::sqrt(2.0));
    } else {
      p["se"] = nullptr;
      p["z"] = nullptr;
      p["p_value"] = nullptr;
    }
    params.push_back(p);
  }
  json j = {{"mode", to_string(f.mode)},
            {"converged", f.converged},
            {"n_iter", f.n_iter},
            {"loglik", f.loglik()},
            {"loglik_trace", f.loglik_trace},
            {"quad_points", f.quad_points},
            {"dim", d},
            {"p", f.theta.p},
            {"q", f.theta.q},
            {"parameters", params},
            {"warnings", f.warnings},
            {"disease_hazard", hazard_json(f.lambda)},
            {"death_hazard", hazard_json(f.nu)}};
  if (f.covariance) {
    json cov = json::array();
    for (Eigen::Index r = 0; r < f.covariance->rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < f.covariance->cols(); ++c) row.push_back((*f.covariance)(r, c));
      cov.push_back(row);
    }
    j["covariance"] = cov;
  }
  return j;
}

FittedModel fitted_from_json(const json& j) {
  try {
    FittedModel f;
    f.mode = parse_fit_mode(j.at("mode").get<std::string>());
    f.converged = j.at("converged").get<bool>();
    f.n_iter = j.value("n_iter", 0);
    f.quad_points = j.at("quad_points").get<std::size_t>();
    f.loglik_trace = j.value("loglik_trace", std::vector<double>{});
    const std::size_t d = j.at("dim").get<std::size_t>();
    const auto& params = j.at("parameters");
    if (params.size() != 2 * d + 1) throw InvalidInput("fitted model: wrong number of parameters");
    std::vector<double> theta;
    std::vector<double> se(2 * d + 1, 0.0);
    bool have_se = false;
    for (std::size_t k = 0; k < params.size(); ++k) {
      theta.push_back(params[k].at("estimate").get<double>());
      if (params[k].contains("se") && !params[k].at("se").is_null()) {
        se[k] = params[k].at("se").get<double>();
        have_se = true;
      }
    }
    f.theta.beta.assign(d, 0.0);
    f.theta.gamma.assign(d, 0.0);
    f.theta.set_theta(theta);
    f.theta.p = j.at("p").get<double>();
    f.theta.q = j.at("q").get<double>();
    validate_params(f.theta, d);
    if (have_se) f.se = se;
    f.lambda = hazard_from_json(j.at("disease_hazard"));
    f.nu = hazard_from_json(j.at("death_hazard"));
    f.warnings = j.value("warnings", std::vector<std::string>{});
    return f;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("fitted model: ") + e.what());
  }
}

std::vector<PredictionQuery> queries_from_json(const json& j) {
  std::vector<PredictionQuery> out;
  try {
    const json& arr = j.is_array() ? j : j.at("queries");
    std::size_t k = 0;
    for (const auto& qj : arr) {
      PredictionQuery q;
      q.id = qj.value("id", "q" + std::to_string(++k));
      const json& cj = qj.at("covariates");
      if (cj.contains("constant")) {
        q.covariates = CovariatePath::constant(cj.at("constant").get<std::vector<double>>());
      } else {
        const auto times = cj.at("times").get<std::vector<double>>();
        const auto rows = cj.at("values").get<std::vector<std::vector<double>>>();
        if (rows.size() != times.size() || rows.empty())
          throw InvalidInput("query '" + q.id + "': covariate times and values differ in length");
        std::vector<double> flat;
        for (const auto& r : rows) {
          if (r.size() != rows.front().size()) throw InvalidInput("query '" + q.id + "': ragged covariate rows");
          flat.insert(flat.end(), r.begin(), r.end());
        }
        q.covariates = CovariatePath::tabulated(times, std::move(flat), rows.front().size());
      }
      if (qj.contains("history")) {
        q.times = qj.at("history").value("times", std::vector<double>{});
        q.diagnoses = qj.at("history").value("diagnoses", std::vector<int>{});
      }
      q.t = qj.at("t").get<double>();
      q.horizon = qj.at("horizon").get<std::vector<double>>();
      out.push_back(std::move(q));
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed query file: ") + e.what());
  }
  return out;
}

void write_table1(const sim::SimSummary& summary, const fs::path& file, const std::string& header) {
  auto out = open_output(file, header);
  out << "parameter,true";
  for (const auto& ms : summary.methods) {
    const std::string m = sim::to_string(ms.method);
    out << ',' << m << "_bias," << m << "_sd," << m << "_se," << m << "_cp";
  }
  out << '\n';
  const auto names = sim::parameter_names(summary.setting.beta_true.size());
  std::vector<double> truth = summary.setting.beta_true;
  truth.insert(truth.end(), summary.setting.gamma_true.begin(), summary.setting.gamma_true.end());
  truth.push_back(summary.setting.sigma2_true);
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << names[k] << ',' << fmt(truth[k]);
    for (const auto& ms : summary.methods) {
      const sim::ParamSummary* ps = nullptr;
      for (const auto& p : ms.params)
        if (p.name == names[k]) ps = &p;
      if (!ps || ps->n_used == 0) {
        out << ",NA,NA,NA,NA";
        continue;
      }
      out << ',' << fmt(ps->bias) << ',' << fmt(ps->sd) << ',' << fmt(ps->mean_se) << ',' << fmt(ps->cp);
    }
    out << '\n';
  }
  out << "converged,NA";
  for (const auto& ms : summary.methods)
    out << ',' << ms.n_converged << ',' << ms.n_reps << ',' << fmt(ms.convergence_rate) << ",NA";
  out << '\n';
}

void write_replicates(const sim::SimSummary& summary, const fs::path& file, const std::string& header) {
  auto out = open_output(file, header);
  const auto names = sim::parameter_names(summary.setting.beta_true.size());
  out << "replicate,method,ok,converged,n_iter,seconds";
  for (const auto& n : names) out << ',' << n;
  for (const auto& n : names) out << ",se_" << n;
  out << ",error\n";
  for (const auto& r : summary.records) {
    out << r.replicate << ',' << sim::to_string(r.method) << ',' << r.ok << ',' << r.converged << ',' << r.n_iter
        << ',' << fmt(r.seconds);
    for (std::size_t k = 0; k < names.size(); ++k) out << ',' << (k < r.theta.size() ? fmt(r.theta[k]) : "NA");
    for (std::size_t k = 0; k < names.size(); ++k) out << ',' << (k < r.se.size() ? fmt(r.se[k]) : "NA");
    std::string err = r.error;
    for (char& c : err)
      if (c == ',' || c == '\n') c = ';';
    out << ',' << err << '\n';
  }
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Joint semiparametric model for misdiagnosed interval-censored disease and death"};
  app.require_subcommand(1);
  Options o;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a simulated dataset");
  add_common(sim_cmd, o);
  sim_cmd->add_option("--n", o.n, "number of subjects");
  sim_cmd->add_option("--replicate", o.replicate_index, "replicate index (selects the PRNG streams)");

  auto* fit_cmd = app.add_subcommand("fit", "fit the model by EM and compute profile-likelihood SEs");
  add_common(fit_cmd, o);
  add_fit_options(fit_cmd, o);
  fit_cmd->add_option("--data", o.data, "dataset directory");

  auto* pred_cmd = app.add_subcommand("predict", "dynamic and population predictions from a fitted model");
  add_common(pred_cmd, o);
  pred_cmd->add_option("--fitted", o.fitted, "fitted.json");
  pred_cmd->add_option("--queries", o.queries, "query file (JSON)");
  pred_cmd->add_option("--data", o.data, "dataset for population curves");

  auto* rep_cmd = app.add_subcommand("replicate", "simulation study with bias/SD/SE/coverage summaries");
  add_common(rep_cmd, o);
  add_fit_options(rep_cmd, o);
  rep_cmd->add_option("--reps", o.reps, "number of replicates");
  rep_cmd->add_option("--n", o.n, "subjects per replicate");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ExitCode::ok : ExitCode::input_error;
  }

  try {
    json cfg = json::object();
    if (!o.config.empty()) {
      cfg = read_json_file(o.config);
      if (!cfg.is_object()) throw InvalidInput(o.config + ": configuration must be a JSON object");
    }
    if (*sim_cmd) return cmd_simulate(cfg, o);
    if (*fit_cmd) return cmd_fit(cfg, o);
    if (*pred_cmd) return cmd_predict(cfg, o);
    return cmd_replicate(cfg, o);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::input_error;
  } catch (const json::exception& e) {
    std::cerr << "error: configuration: " << e.what() << '\n';
    return ExitCode::input_error;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::not_converged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::input_error;
  }
}

}  // namespace icsurv::cli
