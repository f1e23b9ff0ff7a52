#include "msmt/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "msmt/errors.hpp"
#include "msmt/rng.hpp"

namespace msmt {

std::string_view to_string(LikelihoodKind k) {
  return k == LikelihoodKind::Conditional ? "conditional" : "unconditional";
}

LikelihoodKind parse_likelihood_kind(std::string_view name) {
  if (name == "conditional") return LikelihoodKind::Conditional;
  if (name == "unconditional") return LikelihoodKind::Unconditional;
  throw DataError("unknown likelihood '" + std::string(name) +
                  "' (expected conditional or unconditional)");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rows of one transition laid out for repeated evaluation.
struct PreparedRows {
  std::vector<double> a, b, r, log_b, log_ratio;
  std::vector<int> d;
  Eigen::MatrixXd x;
  std::size_t n_events = 0;
  double exposure = 0.0;
};

PreparedRows prepare(const TransitionSpec& spec, std::span<const LongRecord> data,
                     LikelihoodKind kind) {
  PreparedRows p;
  const auto idx = spec.covariate_index();
  std::vector<const LongRecord*> rows;
  for (const auto& row : data) {
    if (row.trans == spec.id()) rows.push_back(&row);
  }
  const auto n = rows.size();
  p.a.resize(n);
  p.b.resize(n);
  p.r.resize(n);
  p.log_b.resize(n);
  p.log_ratio.resize(n);
  p.d.resize(n);
  p.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = *rows[i];
    if (!(row.stop > row.start) || row.start < 0.0) {
      throw DataError("transition " + std::to_string(spec.id()) + ", id " +
                      std::to_string(row.id) + ": needs 0 <= start < stop");
    }
    p.a[i] = kind == LikelihoodKind::Conditional ? row.start : 0.0;
    p.b[i] = row.stop;
    p.r[i] = row.entry_time.value_or(row.start);
    p.log_b[i] = std::log(row.stop);
    p.log_ratio[i] = p.a[i] > 0.0 ? std::log(p.a[i]) - p.log_b[i] : -kInf;
    p.d[i] = row.status;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (idx[j] >= row.covariates.size()) {
        throw DataError("id " + std::to_string(row.id) + ": missing covariate values");
      }
      p.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row.covariates[idx[j]];
    }
    p.n_events += row.status == 1;
    p.exposure += row.stop - row.start;
  }
  return p;
}

// Log-likelihood and, optionally, its gradient in the order
// (log lambda, log gamma, beta..., delta1?, delta2?).
double evaluate(const TransitionSpec& s, const PreparedRows& p, const GaussLegendre& rule,
                Eigen::VectorXd* grad) {
  const auto beta = s.beta();
  const auto nb = static_cast<Eigen::Index>(beta.size());
  const Eigen::Map<const Eigen::VectorXd> b(beta.data(), nb);
  const Eigen::VectorXd lp = p.x * b;
  const double log_lambda = s.log_lambda();
  const double log_gamma = s.log_gamma();
  const double g = s.gamma();
  const double inv_g = 1.0 / g;
  const double d1 = s.delta1().value_or(0.0);
  const auto d2 = s.delta2();
  const Eigen::Index i_d1 = 2 + nb;
  const Eigen::Index i_d2 = i_d1 + (s.delta1() ? 1 : 0);

  double ll = 0.0;
  if (grad) grad->setZero(static_cast<Eigen::Index>(s.n_parameters()));
  for (std::size_t i = 0; i < p.b.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double z = lp[ii] + d1 * p.r[i];
    const double scale = std::exp(log_lambda + z);
    double log_h = log_lambda + log_gamma + (g - 1.0) * p.log_b[i] + z;
    double cumhaz;
    double dh_dlog_gamma = 0.0;
    double dh_d2 = 0.0;
    double clock_log = p.log_b[i];
    if (d2) {
      // H = scale * int exp(d2 (s^(1/g) - r)) ds over [a^g, b^g].
      double i0 = 0.0, i_log = 0.0, i_u = 0.0;
      const double r = p.r[i];
      const double dd = *d2;
      auto visit = [&](double sv, double w) {
        const double u = std::pow(sv, inv_g);
        const double e = w * std::exp(dd * (u - r));
        i0 += e;
        if (grad) {
          i_log += e * std::log(sv);
          i_u += e * (u - r);
        }
      };
      const double lo = p.a[i] > 0.0 ? std::exp(g * std::log(p.a[i])) : 0.0;
      for_each_graded_node(rule, visit, lo, std::exp(g * p.log_b[i]));
      cumhaz = scale * i0;
      dh_dlog_gamma = scale * (i0 + i_log);
      dh_d2 = scale * i_u;
      log_h += dd * (p.b[i] - r);
    } else if (s.clock_reset()) {
      const double cb = p.b[i] - p.r[i];
      const double ca = std::max(p.a[i] - p.r[i], 0.0);
      if (!(cb > 0.0)) throw DataError("clock-reset rows need stop > entry time");
      const double log_cb = std::log(cb);
      const double bg = std::exp(g * log_cb);
      const double ag = ca > 0.0 ? std::exp(g * std::log(ca)) : 0.0;
      cumhaz = scale * (ca > 0.0 ? -bg * std::expm1(g * std::log(ca / cb)) : bg);
      log_h = log_lambda + log_gamma + (g - 1.0) * log_cb + z;
      if (grad) dh_dlog_gamma = scale * g * (bg * log_cb - (ca > 0.0 ? ag * std::log(ca) : 0.0));
      clock_log = log_cb;
    } else {
      const double bg = std::exp(g * p.log_b[i]);
      cumhaz = scale * (-bg * std::expm1(g * p.log_ratio[i]));
      if (grad) {
        double diff = bg * p.log_b[i];
        if (p.a[i] > 0.0) diff -= std::exp(g * (p.log_b[i] + p.log_ratio[i])) * (p.log_b[i] + p.log_ratio[i]);
        dh_dlog_gamma = scale * g * diff;
      }
    }
    const int d = p.d[i];
    ll -= cumhaz;
    if (d) ll += log_h;
    if (grad) {
      auto& gr = *grad;
      const double common = d - cumhaz;
      gr[0] += common;
      gr[1] += -dh_dlog_gamma + (d ? 1.0 + g * clock_log : 0.0);
      for (Eigen::Index j = 0; j < nb; ++j) gr[2 + j] += p.x(ii, j) * common;
      if (s.delta1()) gr[i_d1] += p.r[i] * common;
      if (d2) gr[i_d2] += -dh_d2 + (d ? p.b[i] - p.r[i] : 0.0);
    }
  }
  return ll;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Value and gradient of the function being minimized; +inf marks an
// unusable point (overflowing parameters).
using Smooth = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct Optimum {
  Eigen::VectorXd x;
  double f = kInf;
  Eigen::VectorXd g;
  bool converged = false;
  int iterations = 0;
};

// BFGS with backtracking; non-finite trial values are rejected like any
// other failed Armijo step.
Optimum bfgs(const Smooth& f, Eigen::VectorXd x, const FitOptions& opts) {
  const auto n = x.size();
  Optimum out;
  Eigen::VectorXd g(n);
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw NumericalError("objective is not finite at the starting values");
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool first = true;
  int it = 0;
  Eigen::VectorXd g_new(n);
  for (; it < opts.max_iter; ++it) {
    Eigen::VectorXd p = -h * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      h.setIdentity();
      first = true;
      p = -g;
      slope = g.dot(p);
    }
    double alpha = std::min(1.0, 2.0 / max_abs(p));
    double f_new = kInf;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, alpha *= 0.5) {
      // Below this the Armijo test only sees rounding noise in f.
      if (alpha * -slope < 1e-13 * std::max(1.0, std::abs(fx))) break;
      x_new = x + alpha * p;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (first) {
        h *= sy / y.squaredNorm();
        first = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      h = v * h * v.transpose() + rho * s * s.transpose();
    }
    const double change = std::abs(f_new - fx);
    x = x_new;
    fx = f_new;
    g = g_new;
    if (max_abs(g) < opts.gradient_tol &&
        change <= opts.loglik_rel_tol * std::max(1.0, std::abs(fx))) {
      out.converged = true;
      ++it;
      break;
    }
  }
  out.x = x;
  out.f = fx;
  out.g = g;
  out.iterations = it;
  return out;
}

// Newton steps on the numeric Hessian, for when BFGS stalls short of the
// gradient tolerance.
void newton_polish(const Smooth& f, Optimum& opt, const FitOptions& opts) {
  Gradient grad = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    f(x, g);
    return g;
  };
  Eigen::VectorXd g_new(opt.x.size());
  for (int k = 0; k < 20 && !opt.converged; ++k) {
    const Eigen::MatrixXd hess = numeric_hessian(grad, opt.x);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return;
    const Eigen::VectorXd p = -ldlt.solve(opt.g);
    const double slope = opt.g.dot(p);
    if (!(slope < 0.0)) return;
    double alpha = 1.0;
    bool accepted = false;
    for (int j = 0; j < 30; ++j, alpha *= 0.5) {
      const Eigen::VectorXd x_new = opt.x + alpha * p;
      const double f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= opt.f + 1e-4 * alpha * slope + 1e-12 * std::abs(opt.f)) {
        opt.x = x_new;
        opt.f = f_new;
        opt.g = g_new;
        accepted = true;
        break;
      }
    }
    ++opt.iterations;
    if (max_abs(opt.g) < opts.gradient_tol) opt.converged = true;
    if (!accepted) return;
  }
}

Smooth make_objective(const TransitionSpec& tmpl, const PreparedRows& rows,
                      const GaussLegendre& rule) {
  return [&tmpl, &rows, &rule](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    try {
      const auto s = tmpl.with_internal_parameters({x.data(), static_cast<std::size_t>(x.size())});
      const double ll = evaluate(s, rows, rule, &g);
      if (!std::isfinite(ll) || !g.allFinite()) return kInf;
      g = -g;
      return -ll;
    } catch (const ContractViolation&) {
      return kInf;
    }
  };
}

Eigen::MatrixXd objective_hessian(const Smooth& f, const Eigen::VectorXd& x) {
  return numeric_hessian(
      [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd g(y.size());
        if (!std::isfinite(f(y, g))) throw NumericalError("log-likelihood is not finite near the estimate");
        return g;
      },
      x);
}

}  // namespace

Eigen::VectorXd TransitionFit::internal_parameters() const {
  const auto v = spec.internal_parameters();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd TransitionFit::standard_errors() const {
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Eigen::VectorXd FitResult::internal_parameters() const {
  const auto v = model.internal_parameters();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd FitResult::standard_errors() const {
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

const TransitionFit& FitResult::transition(int id) const {
  for (const auto& t : transitions) {
    if (t.spec.id() == id) return t;
  }
  throw ContractViolation("fit has no transition " + std::to_string(id));
}

double transition_log_likelihood(const TransitionSpec& spec, std::span<const LongRecord> data,
                                 const QuadratureConfig& quad, LikelihoodKind kind,
                                 Eigen::VectorXd* gradient) {
  const auto p = prepare(spec, data, kind);
  return evaluate(spec, p, GaussLegendre::rule(quad.inner_nodes), gradient);
}

double log_likelihood(const ModelSpec& spec, std::span<const double> theta,
                      std::span<const LongRecord> data, const QuadratureConfig& quad,
                      LikelihoodKind kind) {
  const auto model = spec.with_internal_parameters(theta);
  for (const auto& row : data) {
    if (row.trans < 1 || row.trans > static_cast<int>(model.n_transitions())) {
      throw DataError("id " + std::to_string(row.id) + ": unknown transition " +
                      std::to_string(row.trans));
    }
  }
  double ll = 0.0;
  for (const auto& t : model.transitions()) ll += transition_log_likelihood(t, data, quad, kind);
  return ll;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd numeric_hessian(const Gradient& grad, const Eigen::VectorXd& x) {
  const auto n = x.size();
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = std::max(1e-4 * std::abs(x[j]), 1e-6);
    xp[j] = x[j] + h;
    const Eigen::VectorXd up = grad(xp);
    xp[j] = x[j] - h;
    const Eigen::VectorXd down = grad(xp);
    xp[j] = x[j];
    hess.col(j) = (up - down) / (2.0 * h);
  }
  if (!hess.allFinite()) throw NumericalError("Hessian has non-finite entries");
  return 0.5 * (hess + hess.transpose());
}

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& information) {
  if (information.rows() != information.cols()) {
    throw ContractViolation("information matrix must be square");
  }
  const Eigen::MatrixXd sym = 0.5 * (information + information.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) {
    throw NumericalError("information matrix is not positive definite (smallest eigenvalue " +
                         std::to_string(lo) + "); refit from other starting values or use more data");
  }
  if (hi / lo > 1e12) {
    throw NumericalError("information matrix is numerically singular (condition number " +
                         std::to_string(hi / lo) + ")");
  }
  const Eigen::MatrixXd inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                              eig.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

Eigen::MatrixXd observed_information(const ModelSpec& spec, std::span<const double> theta,
                                     std::span<const LongRecord> data,
                                     const QuadratureConfig& quad, LikelihoodKind kind) {
  const auto n = spec.n_parameters();
  if (theta.size() != n) throw ContractViolation("parameter vector has the wrong dimension");
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(n));
  const auto& rule = GaussLegendre::rule(quad.inner_nodes);
  for (const auto& t : spec.transitions()) {
    const auto k = static_cast<Eigen::Index>(t.n_parameters());
    const auto off = static_cast<Eigen::Index>(spec.parameter_offset(t.id()));
    const auto rows = prepare(t, data, kind);
    const auto f = make_objective(t, rows, rule);
    const Eigen::VectorXd x0 =
        Eigen::Map<const Eigen::VectorXd>(theta.data() + off, k);
    cov.block(off, off, k, k) = invert_information(objective_hessian(f, x0));
  }
  return cov;
}

TransitionFit fit_transition(const ModelSpec& spec, int trans, std::span<const LongRecord> data,
                             const FitOptions& opts) {
  const auto& tmpl = spec.transition(trans);
  const auto rows = prepare(tmpl, data, opts.likelihood);
  const std::string tag = "transition " + std::to_string(trans);
  if (rows.b.empty()) throw DataError(tag + ": no rows in the data");
  if (rows.n_events == 0) throw DataError(tag + ": no events, the likelihood has no maximum");
  const auto& rule = GaussLegendre::rule(opts.quad.inner_nodes);

  const auto f = make_objective(tmpl, rows, rule);

  const auto k = static_cast<Eigen::Index>(tmpl.n_parameters());
  Eigen::VectorXd start = Eigen::VectorXd::Zero(k);
  start[0] = std::log(static_cast<double>(rows.n_events) / rows.exposure);

  auto attempt = [&](const Eigen::VectorXd& x0) {
    Optimum opt = bfgs(f, x0, opts);
    if (!opt.converged) newton_polish(f, opt, opts);
    return opt;
  };

  Optimum best = attempt(start);
  std::optional<Eigen::MatrixXd> cov;
  std::string failure;
  auto try_covariance = [&](const Optimum& o) -> std::optional<Eigen::MatrixXd> {
    try {
      return invert_information(objective_hessian(f, o.x));
    } catch (const NumericalError& e) {
      failure = e.what();
      return std::nullopt;
    }
  };
  if (best.converged) cov = try_covariance(best);

  if ((!best.converged || !cov) && opts.retry) {
    SubstreamRng rng(0x6a177e5ULL, static_cast<std::uint64_t>(trans));
    std::normal_distribution<double> jitter(0.0, 0.1);
    Eigen::VectorXd x0 = start;
    for (Eigen::Index i = 0; i < k; ++i) x0[i] += jitter(rng);
    Optimum second = attempt(x0);
    if (second.converged || (!best.converged && second.f < best.f)) {
      auto second_cov = second.converged ? try_covariance(second) : std::nullopt;
      if (second_cov || !cov) {
        best = second;
        cov = second_cov;
      }
    }
  }
  if (!cov) {
    cov = try_covariance(best);
    if (!cov) throw NumericalError(tag + ": " + failure);
  }

  TransitionFit out{
      tmpl.with_internal_parameters({best.x.data(), static_cast<std::size_t>(best.x.size())}),
      *cov};
  out.loglik = -best.f;
  out.converged = best.converged;
  out.iterations = best.iterations;
  out.max_gradient = max_abs(best.g);
  out.n_obs = rows.b.size();
  out.n_events = rows.n_events;
  return out;
}

FitResult fit_model(const ModelSpec& spec, std::span<const LongRecord> data,
                    const FitOptions& opts) {
  validate_long(data, spec);
  std::vector<TransitionFit> fits;
  for (const auto& t : spec.transitions()) fits.push_back(fit_transition(spec, t.id(), data, opts));
  return assemble_fit(spec, std::move(fits), opts.likelihood);
}

FitResult assemble_fit(const ModelSpec& spec, std::vector<TransitionFit> fits,
                       LikelihoodKind likelihood) {
  if (fits.size() != spec.n_transitions()) {
    throw ContractViolation("one fit per transition required");
  }
  std::sort(fits.begin(), fits.end(),
            [](const TransitionFit& a, const TransitionFit& b) { return a.spec.id() < b.spec.id(); });
  std::vector<TransitionSpec> fitted;
  for (const auto& f : fits) fitted.push_back(f.spec);
  ModelSpec model(spec.states(), spec.transition_matrix(), std::move(fitted), spec.covariate_names());
  const auto n = static_cast<Eigen::Index>(model.n_parameters());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  double ll = 0.0;
  bool converged = true;
  for (const auto& fit : fits) {
    const auto off = static_cast<Eigen::Index>(model.parameter_offset(fit.spec.id()));
    const auto k = fit.covariance.rows();
    if (k != static_cast<Eigen::Index>(fit.spec.n_parameters())) {
      throw ContractViolation("transition fit covariance has the wrong size");
    }
    cov.block(off, off, k, k) = fit.covariance;
    ll += fit.loglik;
    converged = converged && fit.converged;
  }
  return FitResult{std::move(model), std::move(cov), ll, converged, likelihood, std::move(fits)};
}

}  // namespace msmt
