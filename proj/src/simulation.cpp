#include "msmt/simulation.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "msmt/errors.hpp"

namespace msmt {

namespace {

void check_uniform(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("uniform draw must lie strictly inside (0, 1)");
}

// Drawn times are strictly after entry even when -log(u) underflows the sum.
double after_entry(double t, double r) {
  return t > r ? t : std::nextafter(r, std::numeric_limits<double>::infinity());
}

}  // namespace

double draw_weibull_time(double lambda, double gamma, double linpred, double u) {
  check_uniform(u);
  if (!(lambda > 0.0) || !(gamma > 0.0)) throw DomainError("lambda and gamma must be positive");
  return std::pow(-std::log(u) / (lambda * std::exp(linpred)), 1.0 / gamma);
}

double draw_case1_time(double lambda, double gamma, double linpred, double delta1, double r,
                       double u) {
  check_uniform(u);
  if (!(lambda > 0.0) || !(gamma > 0.0)) throw DomainError("lambda and gamma must be positive");
  if (!(r >= 0.0)) throw DomainError("entry time must be nonnegative");
  const double t = std::pow(-std::log(u) / (lambda * std::exp(linpred + delta1 * r)) +
                                std::pow(r, gamma),
                            1.0 / gamma);
  return after_entry(t, r);
}

double draw_root_time(const TransitionSpec& spec, double linpred, double r, double u, double tol,
                      const QuadratureConfig& quad) {
  check_uniform(u);
  if (!spec.delta2()) throw ContractViolation("root-finding sampler needs a delta2 term");
  if (!(r >= 0.0)) throw DomainError("entry time must be nonnegative");
  const auto& rule = GaussLegendre::rule(quad.inner_nodes);
  const double target = -std::log(u);
  auto excess = [&](double t) { return detail::cumulative_hazard_lp(spec, r, t, r, linpred, rule) - target; };

  constexpr double kCap = 0x1.0p40;
  double lo = r;
  double width = 1.0;
  double hi = r + width;
  double g_hi = excess(hi);
  while (g_hi < 0.0) {
    if (width >= kCap) {
      std::ostringstream msg;
      msg << "root-finding sampler: conditional survival plateaus at "
          << std::exp(-(g_hi + target)) << " above u = " << u
          << " (no finite time reaches it within 2^40 years)";
      throw NumericalError(msg.str());
    }
    lo = hi;
    width *= 2.0;
    hi = r + width;
    g_hi = excess(hi);
  }

  double t = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = excess(t);
    const double surv = std::exp(-(g + target));
    if (std::abs(surv - u) < tol * u) return after_entry(t, r);
    if (g < 0.0) {
      lo = t;
    } else {
      hi = t;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return after_entry(t, r);
    // Newton on H(r, t) - target; the derivative is the hazard itself.
    const double slope = detail::hazard_lp(spec, t, r, linpred);
    double next = t - g / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    t = next;
  }
  throw NumericalError("root-finding sampler did not converge in 200 iterations");
}

double draw_transition_time(const TransitionSpec& spec, double linpred, double r, double u,
                            double tol, const QuadratureConfig& quad) {
  switch (spec.timescale_case()) {
    case TimescaleCase::ClockForward:
      return r == 0.0 ? draw_weibull_time(spec.lambda(), spec.gamma(), linpred, u)
                      : draw_case1_time(spec.lambda(), spec.gamma(), linpred, 0.0, r, u);
    case TimescaleCase::TimeAtEntry:
      return draw_case1_time(spec.lambda(), spec.gamma(), linpred, *spec.delta1(), r, u);
    case TimescaleCase::TimeSinceEntry:
    case TimescaleCase::Both:
      return draw_root_time(spec, linpred, r, u, tol, quad);
    case TimescaleCase::ClockReset: {
      const double t = r + draw_weibull_time(spec.lambda(), spec.gamma(), linpred, u);
      return t > r ? t : std::nextafter(r, std::numeric_limits<double>::infinity());
    }
  }
  throw ContractViolation("unknown timescale case");
}

Trajectory simulate_trajectory(const ModelSpec& model, std::span<const double> x,
                               SubstreamRng& rng, double root_tol, const QuadratureConfig& quad,
                               double horizon) {
  const auto& t1 = model.transition(1);
  const auto& t2 = model.transition(2);
  const auto& t3 = model.transition(3);
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  const double time_ill = draw_weibull_time(t1.lambda(), t1.gamma(), t1.linear_predictor(x), u1);
  const double time_dead = draw_weibull_time(t2.lambda(), t2.gamma(), t2.linear_predictor(x), u2);

  Trajectory out;
  // Ties have probability zero; they go to the illness transition.
  if (time_ill <= time_dead) {
    out.ill = true;
    out.exit_state1 = time_ill;
    out.death = time_ill < horizon
                    ? draw_transition_time(t3, t3.linear_predictor(x), time_ill, u3, root_tol, quad)
                    : std::numeric_limits<double>::infinity();
  } else {
    out.exit_state1 = time_dead;
    out.death = time_dead;
  }
  return out;
}

SimulatedCohort simulate_cohort(const SimulationConfig& cfg) {
  const auto& model = cfg.model;
  if (!model.is_illness_death()) throw ContractViolation("simulation supports the illness-death model");
  if (cfg.n_subjects < 1) throw ContractViolation("n_subjects must be at least 1");
  if (!(cfg.censoring_time > 0.0)) throw ContractViolation("censoring time must be positive");
  if (cfg.covariates.size() != model.covariate_names().size()) {
    throw ContractViolation("one covariate generator per model covariate required");
  }
  const double c = cfg.censoring_time;

  SimulatedCohort cohort;
  cohort.wide.reserve(cfg.n_subjects);
  std::vector<double> x(cfg.covariates.size());
  for (std::size_t i = 0; i < cfg.n_subjects; ++i) {
    SubstreamRng rng(cfg.seed, i);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const auto& gen = cfg.covariates[k];
      if (gen.kind == CovariateGenerator::Kind::Normal) {
        x[k] = std::normal_distribution<double>(gen.mean, gen.sd)(rng);
      } else {
        x[k] = rng.uniform() < gen.p ? 1.0 : 0.0;
      }
    }
    Trajectory path;
    try {
      path = simulate_trajectory(model, x, rng, cfg.root_tol, cfg.quad, c);
    } catch (const std::exception& e) {
      throw NumericalError("subject " + std::to_string(i + 1) + ": " + e.what());
    }

    WideRecord w;
    w.id = static_cast<std::int64_t>(i) + 1;
    w.covariates = x;
    if (path.ill && path.exit_state1 < c) {
      w.rf = path.exit_state1;
      w.rfi = 1;
      w.os = std::min(path.death, c);
      w.osi = path.death < c ? 1 : 0;
    } else {
      w.rf = w.os = std::min(path.exit_state1, c);
      w.rfi = 0;
      w.osi = (!path.ill && path.death < c) ? 1 : 0;
    }
    cohort.wide.push_back(std::move(w));
  }
  cohort.long_rows = reshape_wide_to_long(cohort.wide, model.transition_matrix());
  return cohort;
}

}  // namespace msmt
