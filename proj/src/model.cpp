#include "msmt/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msmt/errors.hpp"

namespace msmt {

std::string_view to_string(TimescaleCase c) {
  switch (c) {
    case TimescaleCase::ClockForward:
      return "clock_forward";
    case TimescaleCase::TimeAtEntry:
      return "time_at_entry";
    case TimescaleCase::TimeSinceEntry:
      return "time_since_entry";
    case TimescaleCase::Both:
      return "both";
    case TimescaleCase::ClockReset:
      return "clock_reset";
  }
  return "unknown";
}

TimescaleCase parse_timescale_case(std::string_view name) {
  for (auto c : {TimescaleCase::ClockForward, TimescaleCase::TimeAtEntry,
                 TimescaleCase::TimeSinceEntry, TimescaleCase::Both, TimescaleCase::ClockReset}) {
    if (to_string(c) == name) return c;
  }
  if (name == "semi_markov" || name == "cr") return TimescaleCase::ClockReset;
  if (name == "markov" || name == "cf") return TimescaleCase::ClockForward;
  if (name == "ta") return TimescaleCase::TimeAtEntry;
  if (name == "ts") return TimescaleCase::TimeSinceEntry;
  if (name == "tas") return TimescaleCase::Both;
  throw DataError("unknown timescale case '" + std::string(name) +
                  "' (expected clock_forward, time_at_entry, time_since_entry, both or clock_reset)");
}

bool has_delta1(TimescaleCase c) {
  return c == TimescaleCase::TimeAtEntry || c == TimescaleCase::Both;
}

bool has_delta2(TimescaleCase c) {
  return c == TimescaleCase::TimeSinceEntry || c == TimescaleCase::Both;
}

bool uses_entry_time(TimescaleCase c) { return c != TimescaleCase::ClockForward; }

// ---------------------------------------------------------------------------

TransitionSpec::TransitionSpec(int id, int from_state, int to_state, double lambda, double gamma,
                               std::vector<std::size_t> covariate_index, std::vector<double> beta,
                               std::optional<double> delta1, std::optional<double> delta2)
    : id_(id),
      from_(from_state),
      to_(to_state),
      covariate_index_(std::move(covariate_index)),
      beta_(std::move(beta)),
      delta1_(delta1),
      delta2_(delta2) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ContractViolation("transition " + std::to_string(id) + ": lambda must be positive");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ContractViolation("transition " + std::to_string(id) + ": gamma must be positive");
  }
  if (covariate_index_.size() != beta_.size()) {
    throw ContractViolation("transition " + std::to_string(id) +
                            ": one coefficient per covariate required");
  }
  for (double b : beta_) {
    if (!std::isfinite(b)) throw ContractViolation("non-finite covariate coefficient");
  }
  if ((delta1_ && !std::isfinite(*delta1_)) || (delta2_ && !std::isfinite(*delta2_))) {
    throw ContractViolation("non-finite timescale coefficient");
  }
  log_lambda_ = std::log(lambda);
  log_gamma_ = std::log(gamma);
  lambda_ = lambda;
  gamma_ = gamma;
}

TimescaleCase TransitionSpec::timescale_case() const {
  if (reset_) return TimescaleCase::ClockReset;
  if (delta1_ && delta2_) return TimescaleCase::Both;
  if (delta1_) return TimescaleCase::TimeAtEntry;
  if (delta2_) return TimescaleCase::TimeSinceEntry;
  return TimescaleCase::ClockForward;
}

double TransitionSpec::linear_predictor(std::span<const double> x) const {
  double lp = 0.0;
  for (std::size_t idx : covariate_index_) {
    if (idx >= x.size()) throw ContractViolation("covariate vector too short");
  }
  for (std::size_t k = 0; k < beta_.size(); ++k) lp += beta_[k] * x[covariate_index_[k]];
  return lp;
}

std::size_t TransitionSpec::n_parameters() const {
  return 2 + beta_.size() + (delta1_ ? 1 : 0) + (delta2_ ? 1 : 0);
}

std::vector<double> TransitionSpec::internal_parameters() const {
  std::vector<double> theta;
  theta.reserve(n_parameters());
  theta.push_back(log_lambda_);
  theta.push_back(log_gamma_);
  theta.insert(theta.end(), beta_.begin(), beta_.end());
  if (delta1_) theta.push_back(*delta1_);
  if (delta2_) theta.push_back(*delta2_);
  return theta;
}

TransitionSpec TransitionSpec::with_internal_parameters(std::span<const double> theta) const {
  if (theta.size() != n_parameters()) {
    throw ContractViolation("transition " + std::to_string(id_) + ": expected " +
                            std::to_string(n_parameters()) + " parameters, got " +
                            std::to_string(theta.size()));
  }
  std::size_t k = 2;
  std::vector<double> beta(theta.begin() + 2, theta.begin() + 2 + beta_.size());
  k += beta_.size();
  std::optional<double> d1;
  std::optional<double> d2;
  if (delta1_) d1 = theta[k++];
  if (delta2_) d2 = theta[k++];
  TransitionSpec out(id_, from_, to_, std::exp(theta[0]), std::exp(theta[1]), covariate_index_,
                     std::move(beta), d1, d2);
  out.reset_ = reset_;
  return out;
}

std::vector<std::string> TransitionSpec::parameter_names(
    std::span<const std::string> covariate_names) const {
  std::vector<std::string> names{"log_lambda", "log_gamma"};
  for (std::size_t idx : covariate_index_) {
    names.push_back("beta[" + (idx < covariate_names.size() ? covariate_names[idx]
                                                            : std::to_string(idx)) +
                    "]");
  }
  if (delta1_) names.emplace_back("delta1");
  if (delta2_) names.emplace_back("delta2");
  return names;
}

TransitionSpec TransitionSpec::with_case(TimescaleCase c, double initial_delta) const {
  std::optional<double> d1;
  std::optional<double> d2;
  if (has_delta1(c)) d1 = delta1_.value_or(initial_delta);
  if (has_delta2(c)) d2 = delta2_.value_or(initial_delta);
  TransitionSpec out(id_, from_, to_, lambda_, gamma_, covariate_index_, beta_, d1, d2);
  out.reset_ = c == TimescaleCase::ClockReset;
  return out;
}

// ---------------------------------------------------------------------------

ModelSpec::ModelSpec(std::vector<std::string> states, TransitionMatrix matrix,
                     std::vector<TransitionSpec> transitions,
                     std::vector<std::string> covariate_names)
    : states_(std::move(states)),
      matrix_(std::move(matrix)),
      transitions_(std::move(transitions)),
      covariate_names_(std::move(covariate_names)) {
  const std::size_t n = states_.size();
  if (n < 2) throw ContractViolation("a multi-state model needs at least two states");
  if (matrix_.size() != n) throw ContractViolation("transition matrix must be square");
  std::vector<int> seen(transitions_.size() + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (matrix_[i].size() != n) throw ContractViolation("transition matrix must be square");
    if (matrix_[i][i]) throw ContractViolation("self-transitions are not allowed");
    for (std::size_t j = 0; j < n; ++j) {
      if (!matrix_[i][j]) continue;
      const int id = *matrix_[i][j];
      if (id < 1 || id > static_cast<int>(transitions_.size())) {
        throw ContractViolation("transition ids must be 1..K");
      }
      if (seen[id]++) throw ContractViolation("transition id used twice in the matrix");
      const auto& t = transitions_[id - 1];
      if (t.id() != id || t.from_state() != static_cast<int>(i) + 1 ||
          t.to_state() != static_cast<int>(j) + 1) {
        throw ContractViolation("transition " + std::to_string(id) +
                                " does not match its matrix entry");
      }
    }
  }
  for (std::size_t id = 1; id < seen.size(); ++id) {
    if (!seen[id]) {
      throw ContractViolation("transition " + std::to_string(id) + " missing from the matrix");
    }
  }
  for (const auto& t : transitions_) {
    for (std::size_t idx : t.covariate_index()) {
      if (idx >= covariate_names_.size()) {
        throw ContractViolation("transition " + std::to_string(t.id()) +
                                " references an unknown covariate");
      }
    }
    if (t.timescale_case() != TimescaleCase::ClockForward) {
      // Entry-time terms only make sense out of a state that can be entered.
      bool enterable = false;
      for (std::size_t i = 0; i < n; ++i) {
        enterable = enterable || matrix_[i][t.from_state() - 1].has_value();
      }
      if (!enterable) {
        throw ContractViolation("transition " + std::to_string(t.id()) +
                                " leaves an initial state and cannot depend on entry time");
      }
    }
  }
}

ModelSpec::TransitionMatrix ModelSpec::illness_death_matrix() {
  return {{std::nullopt, 1, 2}, {std::nullopt, std::nullopt, 3},
          {std::nullopt, std::nullopt, std::nullopt}};
}

ModelSpec ModelSpec::illness_death(TransitionSpec t1, TransitionSpec t2, TransitionSpec t3,
                                   std::vector<std::string> covariate_names,
                                   std::vector<std::string> states) {
  return ModelSpec(std::move(states), illness_death_matrix(),
                   {std::move(t1), std::move(t2), std::move(t3)}, std::move(covariate_names));
}

const TransitionSpec& ModelSpec::transition(int id) const {
  if (id < 1 || id > static_cast<int>(transitions_.size())) {
    throw ContractViolation("no transition with id " + std::to_string(id));
  }
  return transitions_[id - 1];
}

bool ModelSpec::is_illness_death() const {
  return states_.size() == 3 && matrix_ == illness_death_matrix();
}

bool ModelSpec::is_absorbing(int state) const {
  const auto& row = matrix_.at(state - 1);
  return std::none_of(row.begin(), row.end(), [](const auto& e) { return e.has_value(); });
}

ModelSpec ModelSpec::with_transition(TransitionSpec t) const {
  auto transitions = transitions_;
  const int id = t.id();
  transitions.at(id - 1) = std::move(t);
  return ModelSpec(states_, matrix_, std::move(transitions), covariate_names_);
}

std::size_t ModelSpec::n_parameters() const {
  std::size_t n = 0;
  for (const auto& t : transitions_) n += t.n_parameters();
  return n;
}

std::size_t ModelSpec::parameter_offset(int id) const {
  std::size_t off = 0;
  for (int k = 1; k < id; ++k) off += transition(k).n_parameters();
  return off;
}

std::vector<double> ModelSpec::internal_parameters() const {
  std::vector<double> theta;
  for (const auto& t : transitions_) {
    const auto p = t.internal_parameters();
    theta.insert(theta.end(), p.begin(), p.end());
  }
  return theta;
}

ModelSpec ModelSpec::with_internal_parameters(std::span<const double> theta) const {
  if (theta.size() != n_parameters()) {
    throw ContractViolation("parameter vector has the wrong dimension");
  }
  std::vector<TransitionSpec> transitions;
  std::size_t off = 0;
  for (const auto& t : transitions_) {
    const std::size_t k = t.n_parameters();
    transitions.push_back(t.with_internal_parameters(theta.subspan(off, k)));
    off += k;
  }
  return ModelSpec(states_, matrix_, std::move(transitions), covariate_names_);
}

std::vector<std::string> ModelSpec::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& t : transitions_) {
    for (auto& n : t.parameter_names(covariate_names_)) {
      names.push_back("t" + std::to_string(t.id()) + "." + n);
    }
  }
  return names;
}

void ModelSpec::check_covariates(std::span<const double> x) const {
  if (x.size() != covariate_names_.size()) {
    throw ContractViolation("covariate vector has " + std::to_string(x.size()) +
                            " entries, model expects " +
                            std::to_string(covariate_names_.size()));
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_entry_time(const TransitionSpec& spec, std::optional<double> r, double t) {
  if (!uses_entry_time(spec.timescale_case())) return;
  if (!r) {
    throw ContractViolation("transition " + std::to_string(spec.id()) + " (" +
                            std::string(to_string(spec.timescale_case())) +
                            ") requires the entry time r");
  }
  if (!(*r >= 0.0) || *r > t) {
    throw ContractViolation("entry time r must satisfy 0 <= r <= t");
  }
}

// b^g - a^g without cancellation when a is close to b.
double power_difference(double a, double b, double g) {
  const double bg = std::pow(b, g);
  if (a <= 0.0) return bg;
  return -bg * std::expm1(g * std::log(a / b));
}

}  // namespace

namespace detail {

double hazard_lp(const TransitionSpec& spec, double t, std::optional<double> r, double lp) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw DomainError("hazard is evaluated at t > 0 only");
  }
  check_entry_time(spec, r, t);
  double z = lp;
  if (auto d1 = spec.delta1()) z += *d1 * *r;
  if (auto d2 = spec.delta2()) z += *d2 * (t - *r);
  double clock = t;
  if (spec.clock_reset()) {
    clock = t - *r;
    if (!(clock > 0.0)) throw DomainError("clock-reset hazard is evaluated after entry only");
  }
  return std::exp(spec.log_lambda() + spec.log_gamma() + (spec.gamma() - 1.0) * std::log(clock) + z);
}

double cumulative_hazard_lp(const TransitionSpec& spec, double a, double b,
                            std::optional<double> r, double lp, const GaussLegendre& rule) {
  if (!(a >= 0.0) || std::isnan(b)) throw DomainError("cumulative hazard needs 0 <= a");
  if (b < a) throw ContractViolation("cumulative hazard needs a <= b");
  check_entry_time(spec, r, b);
  if (a == b) return 0.0;
  double z = lp;
  if (auto d1 = spec.delta1()) z += *d1 * *r;
  const double scale = std::exp(spec.log_lambda() + z);
  const double g = spec.gamma();
  // No hazard before entry under clock reset.
  if (spec.clock_reset()) return scale * power_difference(std::max(a - *r, 0.0), b - *r, g);
  if (!spec.delta2()) return scale * power_difference(a, b, g);

  // Substituting s = u^g turns lambda g u^(g-1) du into lambda ds.
  const double d2 = *spec.delta2();
  const double entry = *r;
  const double inv_g = 1.0 / g;
  auto integrand = [&](double s) { return std::exp(d2 * (std::pow(s, inv_g) - entry)); };
  return scale * integrate_graded(rule, integrand, std::pow(a, g), std::pow(b, g));
}

}  // namespace detail

double hazard(const TransitionSpec& spec, double t, std::optional<double> r,
              std::span<const double> x) {
  return detail::hazard_lp(spec, t, r, spec.linear_predictor(x));
}

double cumulative_hazard(const TransitionSpec& spec, double a, double b, std::optional<double> r,
                         std::span<const double> x, const QuadratureConfig& quad) {
  return detail::cumulative_hazard_lp(spec, a, b, r, spec.linear_predictor(x),
                                      GaussLegendre::rule(quad.inner_nodes));
}

double conditional_survival(const TransitionSpec& spec, double t, double r,
                            std::span<const double> x, const QuadratureConfig& quad) {
  if (!(r >= 0.0) || !(t >= r)) throw ContractViolation("conditional survival needs 0 <= r <= t");
  return std::exp(-cumulative_hazard(spec, r, t, r, x, quad));
}

}  // namespace msmt
