#include "msmt/prediction.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "msmt/errors.hpp"
#include "msmt/rng.hpp"
#include "msmt/simulation.hpp"

namespace msmt {

std::string_view to_string(PredictionMethod m) {
  return m == PredictionMethod::Quadrature ? "quadrature" : "simulation";
}

PredictionMethod parse_prediction_method(std::string_view name) {
  if (name == "quadrature") return PredictionMethod::Quadrature;
  if (name == "simulation") return PredictionMethod::Simulation;
  throw DataError("unknown prediction method '" + std::string(name) +
                  "' (expected quadrature or simulation)");
}

void require_origin_start(double from_time) {
  if (from_time != 0.0) {
    throw ContractViolation("only predictions from state 1 at time 0 are supported (got u = " +
                            std::to_string(from_time) + ")");
  }
}

namespace {

void check_inputs(const ModelSpec& model, std::span<const double> x,
                  std::span<const double> times) {
  if (!model.is_illness_death()) {
    throw ContractViolation("occupancy predictions need the illness-death model");
  }
  model.check_covariates(x);
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw ContractViolation("prediction times must be finite and nonnegative");
    }
  }
}

// Graded toward both ends of [a, b].
template <class V>
void for_each_two_sided_node(const GaussLegendre& rule, V&& visit, double a, double b) {
  const double mid = 0.5 * (a + b);
  for_each_graded_node(rule, visit, a, mid);
  for_each_graded_node(rule, [&](double y, double w) { visit(b - y, w); }, 0.0, b - mid);
}

struct PointResult {
  StateTriple probs{1.0, 0.0, 0.0};
  StateTriple los{0.0, 0.0, 0.0};
  double normalization_error = 0.0;
  double complement_error = 0.0;
};

class QuadraturePredictor {
 public:
  QuadraturePredictor(const ModelSpec& model, std::span<const double> x,
                      const QuadratureConfig& quad)
      : t1_(model.transition(1)),
        t2_(model.transition(2)),
        t3_(model.transition(3)),
        lp3_(t3_.linear_predictor(x)),
        a1_(std::exp(t1_.log_lambda() + t1_.linear_predictor(x))),
        a2_(std::exp(t2_.log_lambda() + t2_.linear_predictor(x))),
        outer_(GaussLegendre::rule(quad.outer_nodes)),
        inner_(GaussLegendre::rule(quad.inner_nodes)) {}

  PointResult at(double t, bool with_los) const {
    PointResult out;
    if (t == 0.0) return out;
    const double g1 = t1_.gamma();
    const double g2 = t2_.gamma();

    // Entry into state 2 at v, in s = v^g1 so that h1(v) dv = a1 ds.
    double p12 = 0.0, p13_via_ill = 0.0, l2 = 0.0, l3_via_ill = 0.0;
    auto via_ill = [&](double s, double w) {
      const double v = std::pow(s, 1.0 / g1);
      if (!(v < t)) return;
      const double fw = w * a1_ * p11(v);
      const double h3 = cumhaz3(v, t);
      p12 += fw * std::exp(-h3);
      p13_via_ill += fw * -std::expm1(-h3);
      if (with_los) {
        const double m = stay_in_2(v, t);
        l2 += fw * m;
        l3_via_ill += fw * ((t - v) - m);
      }
    };
    if (t3_.clock_reset()) {
      for_each_two_sided_node(outer_, via_ill, 0.0, std::pow(t, g1));
    } else {
      for_each_graded_node(outer_, via_ill, 0.0, std::pow(t, g1));
    }

    double p13_direct = 0.0, l3_direct = 0.0;
    for_each_graded_node(
        outer_,
        [&](double s, double w) {
          const double v = std::pow(s, 1.0 / g2);
          const double fw = w * a2_ * p11(v);
          p13_direct += fw;
          l3_direct += fw * (t - v);
        },
        0.0, std::pow(t, g2));

    const double p11_t = p11(t);
    out.probs = {p11_t, p12, 1.0 - p11_t - p12};
    out.normalization_error = std::abs(p11_t + p12 + p13_direct + p13_via_ill - 1.0);
    if (with_los) {
      const double l1 = integrate_graded(outer_, [&](double u) { return p11(u); }, 0.0, t);
      out.los = {l1, l2, t - l1 - l2};
      out.complement_error = std::abs(out.los[2] - (l3_direct + l3_via_ill));
    }
    return out;
  }

 private:
  double p11(double v) const {
    return std::exp(-a1_ * std::pow(v, t1_.gamma()) - a2_ * std::pow(v, t2_.gamma()));
  }

  // H3 over [v, t] after entering state 2 at v.
  double cumhaz3(double v, double t) const {
    return detail::cumulative_hazard_lp(t3_, v, t, v, lp3_, inner_);
  }

  // Expected time in state 2 up to t after entering at v.
  double stay_in_2(double v, double t) const {
    return integrate_graded(inner_, [&](double w) { return std::exp(-cumhaz3(v, v + w)); }, 0.0,
                            t - v);
  }

  const TransitionSpec& t1_;
  const TransitionSpec& t2_;
  const TransitionSpec& t3_;
  double lp3_;
  double a1_;
  double a2_;
  const GaussLegendre& outer_;
  const GaussLegendre& inner_;
};

PredictionGrid quadrature_grid(const ModelSpec& model, std::span<const double> x,
                               std::span<const double> times, const QuadratureConfig& quad,
                               bool with_los) {
  const QuadraturePredictor predictor(model, x, quad);
  PredictionGrid grid;
  grid.method = PredictionMethod::Quadrature;
  grid.times.assign(times.begin(), times.end());
  for (double t : times) {
    const auto p = predictor.at(t, with_los);
    grid.probs.push_back(p.probs);
    grid.los.push_back(p.los);
    grid.normalization_error = std::max(grid.normalization_error, p.normalization_error);
    grid.complement_error = std::max(grid.complement_error, p.complement_error);
  }
  return grid;
}

}  // namespace

PredictionGrid occupancy_quadrature(const ModelSpec& model, std::span<const double> x,
                                    std::span<const double> times, const QuadratureConfig& quad,
                                    bool self_check, bool with_los) {
  check_inputs(model, x, times);
  auto grid = quadrature_grid(model, x, times, quad, with_los);
  if (self_check) {
    QuadratureConfig fine = quad;
    fine.inner_nodes = 2 * quad.inner_nodes;
    fine.outer_nodes = 2 * quad.outer_nodes;
    const auto check = quadrature_grid(model, x, times, fine, with_los);
    std::size_t worst_at = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      for (int j = 0; j < 3; ++j) {
        const double d = std::max(std::abs(check.probs[i][j] - grid.probs[i][j]),
                                  std::abs(check.los[i][j] - grid.los[i][j]));
        if (d > grid.quadrature_error) {
          grid.quadrature_error = d;
          worst_at = i;
        }
      }
    }
    if (grid.quadrature_error > 1e-6) {
      std::ostringstream msg;
      msg << "quadrature self-check: doubling the nodes changes predictions by "
          << grid.quadrature_error << " at t = " << times[worst_at]
          << "; consider more quadrature nodes";
      grid.warnings.push_back(msg.str());
    }
  }
  return grid;
}

PredictionGrid occupancy_simulation(const ModelSpec& model, std::span<const double> x,
                                    std::span<const double> times, std::size_t n_paths,
                                    std::uint64_t seed, const QuadratureConfig& quad,
                                    double root_tol) {
  check_inputs(model, x, times);
  if (n_paths < 1) throw ContractViolation("n_paths must be at least 1");
  const double horizon = times.empty() ? 0.0 : *std::max_element(times.begin(), times.end());
  const auto m = times.size();
  std::vector<StateTriple> count(m, StateTriple{}), sum(m, StateTriple{}), sum_sq(m, StateTriple{});
  for (std::size_t i = 0; i < n_paths; ++i) {
    SubstreamRng rng(seed, i);
    const auto path = simulate_trajectory(model, x, rng, root_tol, quad, horizon);
    for (std::size_t k = 0; k < m; ++k) {
      const double t = times[k];
      int state;
      if (path.exit_state1 > t) {
        state = 0;
      } else if (path.ill && path.death > t) {
        state = 1;
      } else {
        state = 2;
      }
      count[k][state] += 1.0;
      const double l1 = std::min(path.exit_state1, t);
      const double l2 = path.ill ? std::max(0.0, std::min(path.death, t) - path.exit_state1) : 0.0;
      const StateTriple stay{l1, l2, t - l1 - l2};
      for (int j = 0; j < 3; ++j) {
        sum[k][j] += stay[j];
        sum_sq[k][j] += stay[j] * stay[j];
      }
    }
  }
  PredictionGrid grid;
  grid.method = PredictionMethod::Simulation;
  grid.times.assign(times.begin(), times.end());
  const double n = static_cast<double>(n_paths);
  for (std::size_t k = 0; k < m; ++k) {
    StateTriple p{}, l{}, pse{}, lse{};
    for (int j = 0; j < 3; ++j) {
      p[j] = count[k][j] / n;
      pse[j] = std::sqrt(p[j] * (1.0 - p[j]) / n);
      l[j] = sum[k][j] / n;
      const double var = n > 1 ? std::max(0.0, (sum_sq[k][j] - n * l[j] * l[j]) / (n - 1)) : 0.0;
      lse[j] = std::sqrt(var / n);
    }
    grid.probs.push_back(p);
    grid.los.push_back(l);
    grid.prob_se.push_back(pse);
    grid.los_se.push_back(lse);
  }
  return grid;
}

DeltaStandardErrors prediction_ci_delta(const FitResult& fit, std::span<const double> x,
                                        std::span<const double> times, PredictionTarget which,
                                        const QuadratureConfig& quad, bool allow_unconverged) {
  if (!fit.converged && !allow_unconverged) {
    throw ConvergenceError("the fit did not converge; refusing to propagate its covariance");
  }
  check_inputs(fit.model, x, times);
  const Eigen::MatrixXd& cov = fit.covariance;
  const auto n = static_cast<Eigen::Index>(fit.model.n_parameters());
  if (cov.rows() != n || cov.cols() != n) {
    throw ContractViolation("covariance does not match the model's parameter vector");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()),
                                                     Eigen::EigenvaluesOnly);
  const double top = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-10 * top || !cov.allFinite()) {
    throw NumericalError("covariance matrix is not positive semidefinite");
  }

  const bool want_probs = which != PredictionTarget::LengthOfStay;
  const bool want_los = which != PredictionTarget::Probabilities;
  const auto m = times.size();
  // Cells: 3 probabilities then 3 LOS per time.
  const auto cells = static_cast<Eigen::Index>(6 * m);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(cells, n);
  const auto theta = fit.model.internal_parameters();
  auto flatten = [&](const PredictionGrid& g) {
    Eigen::VectorXd v(cells);
    for (std::size_t k = 0; k < m; ++k) {
      for (int j = 0; j < 3; ++j) {
        v[static_cast<Eigen::Index>(6 * k + j)] = g.probs[k][j];
        v[static_cast<Eigen::Index>(6 * k + 3 + j)] = g.los[k][j];
      }
    }
    return v;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    if (cov(i, i) == 0.0) continue;
    const double h = 1e-4 * std::max(1.0, std::abs(theta[static_cast<std::size_t>(i)]));
    auto shifted = theta;
    shifted[static_cast<std::size_t>(i)] += h;
    const auto up = quadrature_grid(fit.model.with_internal_parameters(shifted), x, times, quad, want_los);
    shifted[static_cast<std::size_t>(i)] -= 2.0 * h;
    const auto down = quadrature_grid(fit.model.with_internal_parameters(shifted), x, times, quad, want_los);
    jac.col(i) = (flatten(up) - flatten(down)) / (2.0 * h);
  }
  const Eigen::VectorXd var = (jac * cov * jac.transpose()).diagonal();
  DeltaStandardErrors out;
  for (std::size_t k = 0; k < m; ++k) {
    StateTriple p{}, l{};
    for (int j = 0; j < 3; ++j) {
      p[j] = std::sqrt(std::max(0.0, var[static_cast<Eigen::Index>(6 * k + j)]));
      l[j] = std::sqrt(std::max(0.0, var[static_cast<Eigen::Index>(6 * k + 3 + j)]));
    }
    if (want_probs) out.prob_se.push_back(p);
    if (want_los) out.los_se.push_back(l);
  }
  return out;
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Interval probability_interval(double p, double se, double level) {
  if (!(p > 0.0 && p < 1.0) || !(se > 0.0)) return {std::clamp(p, 0.0, 1.0), std::clamp(p, 0.0, 1.0)};
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double logit = std::log(p / (1.0 - p));
  const double half = z * se / (p * (1.0 - p));
  auto expit = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  return {expit(logit - half), expit(logit + half)};
}

Interval los_interval(double los, double se, double level) {
  if (!(los > 0.0) || !(se > 0.0)) return {std::max(los, 0.0), std::max(los, 0.0)};
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double f = std::exp(z * se / los);
  return {los / f, los * f};
}

}  // namespace msmt
