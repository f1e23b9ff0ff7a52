#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msmt/estimation.hpp"
#include "msmt/prediction.hpp"
#include "msmt/simulation.hpp"

namespace msmt {

struct FittedVariant {
  std::string label;    // e.g. "correct", "markov"
  TimescaleCase model;  // case used for the ill -> dead transition
};

struct Scenario {
  std::string label;
  ModelSpec true_model;
  std::vector<CovariateGenerator> covariates{};
  std::vector<FittedVariant> fitted_models{};
  std::size_t n_subjects = 2000;
  std::size_t n_sim = 200;
  std::uint64_t base_seed = 20240101;
  double censoring_time = 6.0;
  std::vector<double> estimand_times{5.0};
  // Covariate values for the occupancy / LOS estimands.
  std::vector<double> prediction_x{};
  std::size_t truth_paths = 1000000;
  bool prediction_intervals = true;
  FitOptions fit{};
  unsigned threads = 1;
};

struct Performance {
  std::size_t n = 0;
  double mean = 0.0;
  double bias = 0.0;
  double emp_se = 0.0;
  double coverage = 0.0;  // NaN when the replicates carry no intervals
  double mcse_bias = 0.0;
  double mcse_coverage = 0.0;
  bool zero_variance = false;
};

// Wald intervals estimate +/- z se at `level`.
Performance performance_measures(std::span<const double> estimates, std::span<const double> ses,
                                 double truth, double level = 0.95);
// Same, with coverage decided by the caller (transformed-scale intervals).
Performance performance_measures(std::span<const double> estimates,
                                 const std::vector<bool>& covered, double truth);

// sqrt(c (1 - c) / n_sim)
double mcse_coverage(double coverage, std::size_t n_sim);

struct ReplicateRecord {
  std::size_t replicate = 0;
  std::string model;
  std::string estimand;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
};

struct AggregateRecord {
  std::string estimand;
  std::string model;
  double truth = 0.0;
  std::size_t failures = 0;
  Performance perf;
};

struct ReplicateFailure {
  std::size_t replicate = 0;
  std::string model;
  std::string reason;
};

struct ScenarioResult {
  std::string label;
  std::vector<ReplicateRecord> replicates;
  std::vector<AggregateRecord> aggregates;
  std::vector<ReplicateFailure> failures;
  // Estimand name -> true value (parameters on the natural scale).
  std::map<std::string, double> truths;
  bool flagged = false;  // more than 5% of replicates failed for some model
  std::vector<std::string> warnings;

  const AggregateRecord& aggregate(const std::string& estimand, const std::string& model) const;
};

// Reference data-generating model for one timescale case: lambda = 0.1,
// gamma = 1.3, beta = (0.01, 0.5) for (age, treatment) on every transition
// and delta = 0.1 on the ill -> dead transition; age ~ N(0, 13) (centred),
// treatment ~ Bernoulli(0.5); fitted models {correct, markov}.
Scenario paper_scenario(TimescaleCase c, std::size_t n_sim = 200, std::uint64_t base_seed = 20240101);

using ProgressCallback = std::function<void(std::size_t done, std::size_t total)>;

ScenarioResult run_scenario(const Scenario& s, const ProgressCallback& progress = {});

// Names used for parameter estimands: "t<k>.lambda", "t<k>.gamma",
// "t<k>.beta[<name>]", "t<k>.delta1", "t<k>.delta2".
std::vector<std::string> natural_parameter_names(const ModelSpec& model);

}  // namespace msmt
