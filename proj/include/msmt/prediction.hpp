#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msmt/estimation.hpp"
#include "msmt/model.hpp"
#include "msmt/quadrature.hpp"

namespace msmt {

enum class PredictionMethod { Quadrature, Simulation };

std::string_view to_string(PredictionMethod m);
PredictionMethod parse_prediction_method(std::string_view name);

using StateTriple = std::array<double, 3>;

// State occupancy p_1j(0, t) and length of stay L_j(t) over [0, t] for a
// subject in state 1 at time 0, at each grid time.
struct PredictionGrid {
  std::vector<double> times;
  std::vector<StateTriple> probs;
  std::vector<StateTriple> los;
  // Filled by occupancy_simulation (Monte Carlo SEs) or attach_delta_ses.
  std::vector<StateTriple> prob_se;
  std::vector<StateTriple> los_se;
  PredictionMethod method = PredictionMethod::Quadrature;

  // Quadrature diagnostics: largest |1 - p11 - p12 - p13| and
  // |t - L1 - L2 - L3| with p13 and L3 integrated directly, and the largest
  // change seen when all node counts are doubled (0 when not run).
  double normalization_error = 0.0;
  double complement_error = 0.0;
  double quadrature_error = 0.0;
  std::vector<std::string> warnings;
};

// Only predictions from time 0 in state 1 are supported.
void require_origin_start(double from_time);

PredictionGrid occupancy_quadrature(const ModelSpec& model, std::span<const double> x,
                                    std::span<const double> times,
                                    const QuadratureConfig& quad = {}, bool self_check = true,
                                    bool with_los = true);

// Uncensored paths at fixed covariates, path i on substream (seed, i).
PredictionGrid occupancy_simulation(const ModelSpec& model, std::span<const double> x,
                                    std::span<const double> times, std::size_t n_paths,
                                    std::uint64_t seed, const QuadratureConfig& quad = {},
                                    double root_tol = 1e-10);

enum class PredictionTarget { Probabilities, LengthOfStay, Both };

struct DeltaStandardErrors {
  std::vector<StateTriple> prob_se;  // empty unless requested
  std::vector<StateTriple> los_se;
};

// Delta-method SEs from the fit's covariance, with a central-difference
// Jacobian (step 1e-4 * max(1, |theta_i|)) of the quadrature predictions.
// Throws ConvergenceError for unconverged fits unless `allow_unconverged`.
DeltaStandardErrors prediction_ci_delta(const FitResult& fit, std::span<const double> x,
                                        std::span<const double> times, PredictionTarget which,
                                        const QuadratureConfig& quad = {},
                                        bool allow_unconverged = false);

struct Interval {
  double lower;
  double upper;
};

// Wald interval on the logit scale (probabilities) or log scale (LOS).
Interval probability_interval(double p, double se, double level = 0.95);
Interval los_interval(double los, double se, double level = 0.95);

double normal_quantile(double p);

}  // namespace msmt
