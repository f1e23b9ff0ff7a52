#pragma once

#include "msmt/simulation.hpp"

namespace fixture {

inline msmt::TransitionSpec weibull(int id, int from, int to, bool covariates = true) {
  if (!covariates) return msmt::TransitionSpec(id, from, to, 0.1, 1.3);
  return msmt::TransitionSpec(id, from, to, 0.1, 1.3, {0, 1}, {0.01, 0.5});
}

// lambda = 0.1, gamma = 1.3, beta = (0.01, 0.5) on (age, trt); delta = 0.1.
inline msmt::ModelSpec paper_model(msmt::TimescaleCase c) {
  return msmt::ModelSpec::illness_death(weibull(1, 1, 2), weibull(2, 1, 3),
                                        weibull(3, 2, 3).with_case(c, 0.1), {"age", "trt"});
}

inline std::vector<msmt::CovariateGenerator> paper_covariates() {
  using K = msmt::CovariateGenerator::Kind;
  return {{"age", K::Normal, 0.0, 13.0}, {"trt", K::Bernoulli, 0.0, 1.0, 0.5}};
}

inline msmt::SimulatedCohort paper_cohort(msmt::TimescaleCase c, std::uint64_t seed,
                                          std::size_t n = 2000) {
  return msmt::simulate_cohort({n, paper_model(c), paper_covariates(), 6.0, seed});
}

}  // namespace fixture
