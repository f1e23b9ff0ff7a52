#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msmt/data.hpp"
#include "msmt/model.hpp"
#include "msmt/quadrature.hpp"
#include "msmt/rng.hpp"

namespace msmt {

struct CovariateGenerator {
  enum class Kind { Normal, Bernoulli };
  std::string name;
  Kind kind = Kind::Normal;
  double mean = 0.0;  // Normal
  double sd = 1.0;    // Normal
  double p = 0.5;     // Bernoulli
};

struct SimulationConfig {
  std::size_t n_subjects = 2000;
  ModelSpec model;
  // One generator per model covariate, in model order.
  std::vector<CovariateGenerator> covariates;
  // Administrative censoring time (years).
  double censoring_time = 6.0;
  std::uint64_t seed = 1;
  QuadratureConfig quad{};
  double root_tol = 1e-10;
};

struct SimulatedCohort {
  std::vector<WideRecord> wide;
  std::vector<LongRecord> long_rows;
};

// T with S(T) = exp(-lambda e^lp T^gamma) = u.
double draw_weibull_time(double lambda, double gamma, double linpred, double u);

// T > r with S(T)/S(r) = u when the log-hazard carries delta1 * r.
double draw_case1_time(double lambda, double gamma, double linpred, double delta1, double r,
                       double u);

// T > r with conditional_survival(T | r) = u for specs with a delta2 term.
// Brackets by doubling from r + 1 (capped at 2^40 years), then Newton steps
// safeguarded by bisection until |S(T)/S(r) - u| < tol * u.
double draw_root_time(const TransitionSpec& spec, double linpred, double r, double u,
                      double tol = 1e-10, const QuadratureConfig& quad = {});

// Dispatches on the timescale case; ClockForward draws are conditional on
// survival to r as well.
double draw_transition_time(const TransitionSpec& spec, double linpred, double r, double u,
                            double tol = 1e-10, const QuadratureConfig& quad = {});

// Subject i uses substream (seed, i): covariates in model order, then u1, u2, u3.
SimulatedCohort simulate_cohort(const SimulationConfig& cfg);

// One uncensored illness-death trajectory from state 1 at time 0. Consumes
// three uniforms (u1, u2, u3) from `rng` whatever happens, so streams stay
// aligned across models. The ill -> dead time is only drawn when illness
// occurs before `horizon`; otherwise `death` is +inf for ill subjects.
struct Trajectory {
  double exit_state1 = 0.0;
  bool ill = false;
  double death = 0.0;
};

Trajectory simulate_trajectory(const ModelSpec& model, std::span<const double> x,
                               SubstreamRng& rng, double root_tol, const QuadratureConfig& quad,
                               double horizon = std::numeric_limits<double>::infinity());

}  // namespace msmt
