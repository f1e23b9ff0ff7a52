#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "msmt/data.hpp"
#include "msmt/model.hpp"
#include "msmt/quadrature.hpp"

namespace msmt {

// Conditional: exposure integrated from each row's start (left truncation).
// Unconditional: exposure integrated from time 0, i.e. S(t | r) without
// conditioning on survival to entry.
enum class LikelihoodKind { Conditional, Unconditional };

std::string_view to_string(LikelihoodKind k);
LikelihoodKind parse_likelihood_kind(std::string_view name);

struct FitOptions {
  QuadratureConfig quad{};
  LikelihoodKind likelihood = LikelihoodKind::Conditional;
  int max_iter = 200;
  double gradient_tol = 1e-6;
  double loglik_rel_tol = 1e-10;
  bool retry = true;
};

struct TransitionFit {
  TransitionSpec spec;               // fitted, natural scale
  Eigen::MatrixXd covariance;        // internal parameters (log lambda, log gamma, ...)
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double max_gradient = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_events = 0;

  Eigen::VectorXd internal_parameters() const;
  Eigen::VectorXd standard_errors() const;
};

struct FitResult {
  ModelSpec model;                   // fitted
  Eigen::MatrixXd covariance;        // block diagonal over transitions
  double loglik = 0.0;
  bool converged = false;
  LikelihoodKind likelihood = LikelihoodKind::Conditional;
  std::vector<TransitionFit> transitions;

  Eigen::VectorXd internal_parameters() const;
  Eigen::VectorXd standard_errors() const;
  const TransitionFit& transition(int id) const;
};

// Log-likelihood of the rows belonging to `spec`'s transition. If `gradient`
// is given it receives the analytic gradient with respect to the internal
// parameters of `spec`.
double transition_log_likelihood(const TransitionSpec& spec, std::span<const LongRecord> data,
                                 const QuadratureConfig& quad = {},
                                 LikelihoodKind kind = LikelihoodKind::Conditional,
                                 Eigen::VectorXd* gradient = nullptr);

// Full log-likelihood at internal parameters `theta` (sum over transitions).
double log_likelihood(const ModelSpec& spec, std::span<const double> theta,
                      std::span<const LongRecord> data, const QuadratureConfig& quad = {},
                      LikelihoodKind kind = LikelihoodKind::Conditional);

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Central differences with step 1e-5 * max(1, |x_i|).
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x);
// Central differences of the gradient, step max(1e-4 |x_i|, 1e-6), symmetrized.
Eigen::MatrixXd numeric_hessian(const Gradient& g, const Eigen::VectorXd& x);
// Inverse of a symmetric positive-definite matrix; NumericalError otherwise,
// reporting the smallest eigenvalue or the condition number.
Eigen::MatrixXd invert_information(const Eigen::MatrixXd& information);

// Covariance of the internal parameters: inverse of the negative Hessian of
// the log-likelihood at `theta`.
Eigen::MatrixXd observed_information(const ModelSpec& spec, std::span<const double> theta,
                                     std::span<const LongRecord> data,
                                     const QuadratureConfig& quad = {},
                                     LikelihoodKind kind = LikelihoodKind::Conditional);

TransitionFit fit_transition(const ModelSpec& spec, int trans, std::span<const LongRecord> data,
                             const FitOptions& opts = {});

FitResult fit_model(const ModelSpec& spec, std::span<const LongRecord> data,
                    const FitOptions& opts = {});

// Combines per-transition fits (one per transition of `spec`, any order) into
// a FitResult with block-diagonal covariance.
FitResult assemble_fit(const ModelSpec& spec, std::vector<TransitionFit> fits,
                       LikelihoodKind likelihood = LikelihoodKind::Conditional);

}  // namespace msmt
