#include "msmt/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <iostream>
#include <map>
#include <optional>

#include "msmt/errors.hpp"
#include "msmt/io.hpp"

namespace msmt::cli {

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> quad_nodes;
  std::optional<double> tol;
  std::optional<unsigned> threads;
  std::string out;
};

void apply(const Globals& g, QuadratureConfig& quad) {
  if (g.quad_nodes) quad.inner_nodes = quad.outer_nodes = *g.quad_nodes;
}

void apply(const Globals& g, FitOptions& fit) {
  apply(g, fit.quad);
  if (g.tol) fit.gradient_tol = *g.tol;
}

void emit(std::ostream& os, const std::string& path, const CsvTable& table) {
  if (path.empty() || path == "-") {
    write_csv(os, table);
  } else {
    write_csv_file(path, table);
  }
}

std::string require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw CLI::ValidationError("--out", std::string("is required for ") + what);
  return g.out;
}

// name=value pairs placed into a zero vector in model covariate order.
std::vector<double> covariate_pattern(const ModelSpec& model, const std::vector<std::string>& at) {
  const auto& names = model.covariate_names();
  std::vector<double> x(names.size(), 0.0);
  for (const auto& item : at) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("--at expects name=value, got '" + item + "'");
    const auto name = item.substr(0, eq);
    const auto pos = std::find(names.begin(), names.end(), name);
    if (pos == names.end()) throw DataError("--at: the model has no covariate '" + name + "'");
    x[static_cast<std::size_t>(pos - names.begin())] = parse_double(item.substr(eq + 1), "--at " + name);
  }
  return x;
}

void report_error(std::ostream& err, const char* kind, const std::string& message, int code) {
  const nlohmann::json j{{"error", kind}, {"message", message}, {"exit_code", code}};
  err << j.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Illness-death models with multiple timescales", "msmt"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (simulate, study, simulation predictions)");
  app.add_option("--quad-nodes", g.quad_nodes, "Gauss-Legendre nodes per panel")->check(CLI::Range(2, 200));
  app.add_option("--tol", g.tol, "Gradient tolerance of the optimizer")->check(CLI::PositiveNumber);
  app.add_option("--threads", g.threads, "Worker threads for the study")->check(CLI::Range(1u, 256u));
  app.add_option("--out", g.out, "Output file (or prefix for commands writing several files)");

  // reshape
  auto* reshape = app.add_subcommand("reshape", "Wide CSV to long (transition) CSV");
  std::string wide_path;
  reshape->add_option("wide", wide_path, "Wide CSV: id,rf,rfi,os,osi,<covariates>")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a model to long-format data");
  std::string data_path, config_path, table_path, likelihood;
  fit->add_option("--data", data_path, "Long CSV")->required();
  fit->add_option("--config", config_path, "Model config (msmt-config/1)")->required();
  fit->add_option("--table", table_path, "Parameter table CSV (default: standard output)");
  fit->add_option("--likelihood", likelihood, "conditional or unconditional")
      ->check(CLI::IsMember({"conditional", "unconditional"}));

  // predict
  auto* predict = app.add_subcommand("predict", "State occupancy and length of stay from a fit");
  std::string fit_path, method = "quadrature", ci, label = "fit";
  std::vector<double> times;
  std::vector<std::string> at;
  double step = 0.0, until = 0.0, level = 0.95;
  std::size_t paths = 100000;
  bool allow_unconverged = false;
  predict->add_option("--fit", fit_path, "Fit file (msmt-fit/1)")->required();
  predict->add_option("--times", times, "Prediction times")->delimiter(',');
  predict->add_option("--until", until, "Regular grid end (with --step)")->check(CLI::PositiveNumber);
  predict->add_option("--step", step, "Regular grid spacing")->check(CLI::PositiveNumber);
  predict->add_option("--method", method)->check(CLI::IsMember({"quadrature", "simulation"}));
  predict->add_option("--ci", ci, "delta, mc or none")->check(CLI::IsMember({"delta", "mc", "none"}));
  predict->add_option("--at", at, "Covariate values name=value (others are 0)");
  predict->add_option("--paths", paths, "Paths for --method simulation")->check(CLI::PositiveNumber);
  predict->add_option("--level", level, "Interval level")->check(CLI::Range(0.5, 0.9999));
  predict->add_option("--label", label, "Model label written to the output");
  predict->add_flag("--allow-unconverged", allow_unconverged);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulate a cohort from a config");
  std::string sim_config;
  std::optional<std::size_t> n_subjects;
  simulate->add_option("--config", sim_config, "Config with a simulation section")->required();
  simulate->add_option("--n", n_subjects, "Number of subjects")->check(CLI::PositiveNumber);

  // study
  auto* study = app.add_subcommand("study", "Run a simulation study scenario");
  std::string study_config, paper_case;
  std::optional<std::size_t> n_sim, truth_paths;
  bool paper_scale = false, no_intervals = false, quiet = false;
  auto* study_cfg_opt = study->add_option("--config", study_config, "Config with a study section");
  study->add_option("--paper-case", paper_case, "Built-in scenario: clock_forward, time_at_entry, ...")
      ->excludes(study_cfg_opt);
  study->add_option("--n-sim", n_sim, "Replicates")->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
  study->add_flag("--paper-scale", paper_scale, "1000 replicates");
  study->add_option("--truth-paths", truth_paths, "Paths for the true occupancy values")
      ->check(CLI::PositiveNumber);
  study->add_flag("--no-intervals", no_intervals, "Skip delta-method intervals for predictions");
  study->add_flag("--quiet", quiet, "No progress on standard error");

  try {
    app.parse(argc, argv);

    if (*reshape) {
      const auto wide = wide_from_csv(read_csv_file(wide_path));
      LongData d{wide.covariate_names,
                 reshape_wide_to_long(wide.records, ModelSpec::illness_death_matrix())};
      emit(out, g.out, long_to_csv(d));
    } else if (*fit) {
      auto cfg = read_config_file(config_path);
      apply(g, cfg.fit);
      if (!likelihood.empty()) cfg.fit.likelihood = parse_likelihood_kind(likelihood);
      const auto data = select_covariates(long_from_csv(read_csv_file(data_path)),
                                          cfg.model.covariate_names());
      const auto path = require_out(g, "fit");
      const auto result = fit_model(cfg.model, data.rows, cfg.fit);
      write_fit_file(path, result);
      emit(out, table_path, parameter_table(result));
      if (!result.converged) {
        std::string which;
        for (const auto& t : result.transitions) {
          if (!t.converged) which += " " + std::to_string(t.spec.id());
        }
        throw ConvergenceError("optimizer did not converge for transition(s)" + which +
                               "; the fit file was written for inspection");
      }
    } else if (*predict) {
      const auto result = read_fit_file(fit_path);
      QuadratureConfig quad;
      apply(g, quad);
      if (step > 0.0 || until > 0.0) {
        if (!(step > 0.0 && until > 0.0)) throw CLI::ValidationError("--step", "needs --until");
        for (std::size_t i = 0;; ++i) {
          const double t = static_cast<double>(i) * step;
          if (t > until * (1.0 + 1e-12)) break;
          times.push_back(std::min(t, until));
        }
      }
      if (times.empty()) throw CLI::ValidationError("--times", "give --times or --until/--step");
      const auto x = covariate_pattern(result.model, at);
      const auto m = parse_prediction_method(method);
      if (ci.empty()) ci = m == PredictionMethod::Quadrature ? "delta" : "mc";
      if ((ci == "delta") != (m == PredictionMethod::Quadrature) && ci != "none") {
        throw CLI::ValidationError("--ci", "delta goes with quadrature and mc with simulation");
      }
      PredictionGrid grid;
      if (m == PredictionMethod::Quadrature) {
        grid = occupancy_quadrature(result.model, x, times, quad);
        if (ci == "delta") {
          const auto ses = prediction_ci_delta(result, x, times, PredictionTarget::Both, quad,
                                               allow_unconverged);
          grid.prob_se = ses.prob_se;
          grid.los_se = ses.los_se;
        }
      } else {
        grid = occupancy_simulation(result.model, x, times, paths, g.seed.value_or(1), quad);
      }
      if (ci == "none") {
        grid.prob_se.clear();
        grid.los_se.clear();
      }
      for (const auto& w : grid.warnings) err << "warning: " << w << '\n';
      emit(out, g.out, prediction_table(grid, result.model, label, level));
    } else if (*simulate) {
      const auto cfg = read_config_file(sim_config);
      if (cfg.generators.size() != cfg.model.covariate_names().size()) {
        throw DataError("config: a simulation section with one generator per covariate is required");
      }
      SimulationConfig sc{n_subjects.value_or(cfg.n_subjects), cfg.model, cfg.generators,
                          cfg.censoring_time, g.seed.value_or(cfg.seed), cfg.quad};
      apply(g, sc.quad);
      if (g.tol) sc.root_tol = *g.tol;
      const auto prefix = require_out(g, "simulate");
      const auto cohort = simulate_cohort(sc);
      write_csv_file(prefix + "_wide.csv", wide_to_csv({cfg.model.covariate_names(), cohort.wide}));
      write_csv_file(prefix + "_long.csv", long_to_csv({cfg.model.covariate_names(), cohort.long_rows}));
      out << "wrote " << prefix << "_wide.csv (" << cohort.wide.size() << " subjects) and " << prefix
          << "_long.csv (" << cohort.long_rows.size() << " rows)\n";
    } else if (*study) {
      Scenario s = [&] {
        if (!paper_case.empty()) return paper_scenario(parse_timescale_case(paper_case));
        if (study_config.empty()) throw CLI::ValidationError("study", "give --config or --paper-case");
        auto cfg = read_config_file(study_config);
        if (!cfg.study) throw DataError("config: no study section");
        return *cfg.study;
      }();
      if (paper_scale) s.n_sim = 1000;
      if (n_sim) s.n_sim = *n_sim;
      if (truth_paths) s.truth_paths = *truth_paths;
      if (no_intervals) s.prediction_intervals = false;
      if (g.seed) s.base_seed = *g.seed;
      if (g.threads) s.threads = *g.threads;
      apply(g, s.fit);
      const auto prefix = require_out(g, "study");
      ProgressCallback progress;
      if (!quiet) {
        progress = [&err](std::size_t done, std::size_t total) {
          if (done == total || done % 10 == 0) err << "replicate " << done << "/" << total << '\n';
        };
      }
      const auto r = run_scenario(s, progress);
      write_csv_file(prefix + "_replicates.csv", replicate_table(r));
      write_csv_file(prefix + "_aggregate.csv", aggregate_table(r));
      write_csv_file(prefix + "_failures.csv", failure_table(r));
      for (const auto& w : r.warnings) err << "warning: " << w << '\n';
      out << "scenario " << r.label << ": " << r.aggregates.size() << " aggregates, " << r.failures.size()
          << " failed fits\n";
      if (r.flagged) {
        throw ConvergenceError("more than 5% of replicates failed; results were written but are flagged");
      }
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what(), kUsage);
    return kUsage;
  } catch (const IoError& e) {
    report_error(err, "io", e.what(), kIo);
    return kIo;
  } catch (const DataError& e) {
    report_error(err, "data", e.what(), kData);
    return kData;
  } catch (const ContractViolation& e) {
    report_error(err, "data", e.what(), kData);
    return kData;
  } catch (const DomainError& e) {
    report_error(err, "data", e.what(), kData);
    return kData;
  } catch (const ConvergenceError& e) {
    report_error(err, "convergence", e.what(), kNumerical);
    return kNumerical;
  } catch (const NumericalError& e) {
    report_error(err, "numerical", e.what(), kNumerical);
    return kNumerical;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what(), kInternal);
    return kInternal;
  }
  return kOk;
}

}  // namespace msmt::cli
