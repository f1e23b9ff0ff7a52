#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msmt/quadrature.hpp"

namespace msmt {

// Which timescale terms enter the log-hazard on top of time since origin t:
// delta1 * r (time at entry to the current state) and/or delta2 * (t - r)
// (time since entry). ClockReset replaces t by t - r in the baseline
// (semi-Markov), with no delta terms.
enum class TimescaleCase { ClockForward, TimeAtEntry, TimeSinceEntry, Both, ClockReset };

std::string_view to_string(TimescaleCase c);
TimescaleCase parse_timescale_case(std::string_view name);
bool uses_entry_time(TimescaleCase c);
bool has_delta1(TimescaleCase c);
bool has_delta2(TimescaleCase c);

// Covariate values aligned with ModelSpec::covariate_names().
using CovariateVector = std::vector<double>;

// One directed edge of the multi-state graph with a Weibull baseline
//   h(t | r, x) = lambda * gamma * t^(gamma - 1) * exp(x'beta + delta1 r + delta2 (t - r)).
// Scale and shape are held on the log scale; the accessors return natural values.
class TransitionSpec {
 public:
  TransitionSpec(int id, int from_state, int to_state, double lambda, double gamma,
                 std::vector<std::size_t> covariate_index = {}, std::vector<double> beta = {},
                 std::optional<double> delta1 = std::nullopt,
                 std::optional<double> delta2 = std::nullopt);

  int id() const { return id_; }
  int from_state() const { return from_; }
  int to_state() const { return to_; }

  double lambda() const { return lambda_; }
  double gamma() const { return gamma_; }
  double log_lambda() const { return log_lambda_; }
  double log_gamma() const { return log_gamma_; }
  std::span<const double> beta() const { return beta_; }
  std::span<const std::size_t> covariate_index() const { return covariate_index_; }
  std::optional<double> delta1() const { return delta1_; }
  std::optional<double> delta2() const { return delta2_; }
  TimescaleCase timescale_case() const;

  double linear_predictor(std::span<const double> x) const;

  // Internal parameter vector: [log lambda, log gamma, beta..., delta1?, delta2?].
  std::size_t n_parameters() const;
  std::vector<double> internal_parameters() const;
  TransitionSpec with_internal_parameters(std::span<const double> theta) const;
  std::vector<std::string> parameter_names(std::span<const std::string> covariate_names) const;

  // Same baseline and covariates under another timescale case; new delta terms
  // start at `initial_delta`, dropped ones are removed.
  TransitionSpec with_case(TimescaleCase c, double initial_delta = 0.0) const;
  bool clock_reset() const { return reset_; }

 private:
  int id_;
  int from_;
  int to_;
  double log_lambda_;
  double log_gamma_;
  double lambda_;
  double gamma_;
  std::vector<std::size_t> covariate_index_;
  std::vector<double> beta_;
  std::optional<double> delta1_;
  std::optional<double> delta2_;
  bool reset_ = false;
};

// States are numbered 1..n in the order of `states`. Entry (i, j) of the
// transition matrix holds the id of transition i -> j, or nothing.
class ModelSpec {
 public:
  using TransitionMatrix = std::vector<std::vector<std::optional<int>>>;

  ModelSpec(std::vector<std::string> states, TransitionMatrix matrix,
            std::vector<TransitionSpec> transitions, std::vector<std::string> covariate_names);

  // Healthy -> ill (1), healthy -> dead (2), ill -> dead (3).
  static ModelSpec illness_death(TransitionSpec t1, TransitionSpec t2, TransitionSpec t3,
                                 std::vector<std::string> covariate_names,
                                 std::vector<std::string> states = {"healthy", "ill", "dead"});
  static TransitionMatrix illness_death_matrix();

  const std::vector<std::string>& states() const { return states_; }
  const TransitionMatrix& transition_matrix() const { return matrix_; }
  const std::vector<TransitionSpec>& transitions() const { return transitions_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  std::size_t n_states() const { return states_.size(); }
  std::size_t n_transitions() const { return transitions_.size(); }

  // Transition ids are 1-based.
  const TransitionSpec& transition(int id) const;
  bool is_illness_death() const;
  bool is_absorbing(int state) const;

  ModelSpec with_transition(TransitionSpec t) const;

  std::size_t n_parameters() const;
  // Offset of transition `id` in the concatenated internal vector.
  std::size_t parameter_offset(int id) const;
  std::vector<double> internal_parameters() const;
  ModelSpec with_internal_parameters(std::span<const double> theta) const;
  std::vector<std::string> parameter_names() const;

  void check_covariates(std::span<const double> x) const;

 private:
  std::vector<std::string> states_;
  TransitionMatrix matrix_;
  std::vector<TransitionSpec> transitions_;
  std::vector<std::string> covariate_names_;
};

// Hazard at time t > 0. `r` (entry time to the origin state of the
// transition) is required unless the case is ClockForward, with 0 <= r <= t.
double hazard(const TransitionSpec& spec, double t, std::optional<double> r,
              std::span<const double> x);

// Integral of the hazard over [a, b]. Closed form without a delta2 term,
// composite Gauss-Legendre in s = u^gamma otherwise.
double cumulative_hazard(const TransitionSpec& spec, double a, double b, std::optional<double> r,
                         std::span<const double> x, const QuadratureConfig& quad = {});

// exp(-H(r, t)): probability of not leaving by t having entered at r.
double conditional_survival(const TransitionSpec& spec, double t, double r,
                            std::span<const double> x, const QuadratureConfig& quad = {});

namespace detail {
// Same as the public functions with the linear predictor already evaluated.
double hazard_lp(const TransitionSpec& spec, double t, std::optional<double> r, double lp);
double cumulative_hazard_lp(const TransitionSpec& spec, double a, double b,
                            std::optional<double> r, double lp, const GaussLegendre& rule);
}  // namespace detail

}  // namespace msmt
