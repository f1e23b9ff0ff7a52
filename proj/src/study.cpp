#include "msmt/study.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>

#include "msmt/errors.hpp"

namespace msmt {

namespace {

constexpr const char* kCommon = "common";

std::string format_time(double t) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, t);
  return std::string(buf, res.ptr);
}

std::string prob_name(int j, double t) {
  return "p1" + std::to_string(j + 1) + "(0," + format_time(t) + ")";
}

std::string los_name(int j, double t) {
  return "L" + std::to_string(j + 1) + "(" + format_time(t) + ")";
}

bool is_log_parameter(std::size_t index_in_transition) { return index_in_transition < 2; }

struct ParameterTruth {
  double natural;
  double internal;
};

// Truth for the parameters of `fitted` transition `t`, by position: the
// baseline and betas come from the true transition, delta terms from the true
// transition if present and 0 otherwise.
std::vector<ParameterTruth> parameter_truths(const TransitionSpec& truth, const TransitionSpec& fitted) {
  std::vector<ParameterTruth> out{{truth.lambda(), truth.log_lambda()},
                                  {truth.gamma(), truth.log_gamma()}};
  for (double b : truth.beta()) out.push_back({b, b});
  if (fitted.delta1()) {
    const double d = truth.delta1().value_or(0.0);
    out.push_back({d, d});
  }
  if (fitted.delta2()) {
    const double d = truth.delta2().value_or(0.0);
    out.push_back({d, d});
  }
  return out;
}

struct ReplicateOutput {
  std::vector<ReplicateRecord> records;
  std::vector<ReplicateFailure> failures;
};

}  // namespace

double mcse_coverage(double coverage, std::size_t n_sim) {
  if (n_sim == 0) throw ContractViolation("n_sim must be positive");
  return std::sqrt(coverage * (1.0 - coverage) / static_cast<double>(n_sim));
}

Performance performance_measures(std::span<const double> estimates,
                                 const std::vector<bool>& covered, double truth) {
  if (estimates.size() < 2) throw ContractViolation("performance measures need at least 2 replicates");
  if (covered.size() != estimates.size()) {
    throw ContractViolation("one coverage flag per estimate required");
  }
  Performance p;
  p.n = estimates.size();
  const double n = static_cast<double>(p.n);
  double sum = 0.0;
  for (double e : estimates) sum += e;
  p.mean = sum / n;
  double ss = 0.0;
  for (double e : estimates) ss += (e - p.mean) * (e - p.mean);
  p.bias = p.mean - truth;
  p.emp_se = std::sqrt(ss / (n - 1.0));
  p.mcse_bias = p.emp_se / std::sqrt(n);
  p.zero_variance = p.emp_se == 0.0;
  p.coverage = static_cast<double>(std::count(covered.begin(), covered.end(), true)) / n;
  p.mcse_coverage = mcse_coverage(p.coverage, p.n);
  return p;
}

Performance performance_measures(std::span<const double> estimates, std::span<const double> ses,
                                 double truth, double level) {
  if (ses.size() != estimates.size()) throw ContractViolation("one SE per estimate required");
  const double z = normal_quantile(0.5 + 0.5 * level);
  std::vector<bool> covered;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    covered.push_back(std::abs(estimates[i] - truth) <= z * ses[i]);
  }
  return performance_measures(estimates, covered, truth);
}

const AggregateRecord& ScenarioResult::aggregate(const std::string& estimand,
                                                 const std::string& model) const {
  for (const auto& a : aggregates) {
    if (a.estimand == estimand && a.model == model) return a;
  }
  throw ContractViolation("no aggregate for " + estimand + " under " + model);
}

std::vector<std::string> natural_parameter_names(const ModelSpec& model) {
  auto names = model.parameter_names();
  for (auto& n : names) {
    for (const auto& [from, to] : {std::pair<std::string, std::string>{".log_lambda", ".lambda"},
                                   {".log_gamma", ".gamma"}}) {
      const auto pos = n.find(from);
      if (pos != std::string::npos) n.replace(pos, from.size(), to);
    }
  }
  return names;
}

Scenario paper_scenario(TimescaleCase c, std::size_t n_sim, std::uint64_t base_seed) {
  auto weibull = [](int id, int from, int to) {
    return TransitionSpec(id, from, to, 0.1, 1.3, {0, 1}, {0.01, 0.5});
  };
  Scenario s{std::string(to_string(c)),
             ModelSpec::illness_death(weibull(1, 1, 2), weibull(2, 1, 3),
                                      weibull(3, 2, 3).with_case(c, 0.1), {"age", "treatment"}),
             {{"age", CovariateGenerator::Kind::Normal, 0.0, 13.0},
              {"treatment", CovariateGenerator::Kind::Bernoulli, 0.0, 1.0, 0.5}},
             {{"correct", c}, {"markov", TimescaleCase::ClockForward}}};
  s.n_sim = n_sim;
  s.base_seed = base_seed;
  s.prediction_x = {0.0, 0.0};
  return s;
}

ScenarioResult run_scenario(const Scenario& s, const ProgressCallback& progress) {
  const auto& truth_model = s.true_model;
  if (!truth_model.is_illness_death()) throw ContractViolation("study needs an illness-death model");
  if (s.n_sim < 2) throw ContractViolation("n_sim must be at least 2");
  if (s.fitted_models.empty()) throw ContractViolation("no fitted models given");
  std::set<std::string> labels{kCommon};
  for (const auto& v : s.fitted_models) {
    if (!labels.insert(v.label).second) {
      throw ContractViolation("fitted model label '" + v.label + "' is repeated or reserved");
    }
  }
  truth_model.check_covariates(s.prediction_x);
  for (double t : s.estimand_times) {
    if (!(t > 0.0)) throw ContractViolation("estimand times must be positive");
  }

  std::vector<ModelSpec> variants;
  for (const auto& v : s.fitted_models) {
    variants.push_back(truth_model.with_transition(truth_model.transition(3).with_case(v.model, 0.0)));
  }

  ScenarioResult result;
  result.label = s.label;

  // True occupancy and LOS come from a large simulation.
  const auto truth_grid = occupancy_simulation(truth_model, s.prediction_x, s.estimand_times,
                                               s.truth_paths, s.base_seed ^ 0x7275746873ULL,
                                               s.fit.quad);
  for (std::size_t k = 0; k < s.estimand_times.size(); ++k) {
    for (int j = 0; j < 3; ++j) {
      result.truths[prob_name(j, s.estimand_times[k])] = truth_grid.probs[k][j];
      result.truths[los_name(j, s.estimand_times[k])] = truth_grid.los[k][j];
    }
  }
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto names = natural_parameter_names(variants[v]);
    std::size_t pos = 0;
    for (const auto& t : variants[v].transitions()) {
      const auto truths = parameter_truths(truth_model.transition(t.id()), t);
      for (const auto& tr : truths) result.truths[names[pos++]] = tr.natural;
    }
  }

  const double z = normal_quantile(0.975);
  const SimulationConfig base_cfg{s.n_subjects, truth_model, s.covariates, s.censoring_time,
                                  s.base_seed, s.fit.quad};

  auto run_replicate = [&](std::size_t rep) {
    ReplicateOutput out;
    auto fail_all = [&](const std::string& why) {
      out.failures.push_back({rep, kCommon, why});
      for (const auto& v : s.fitted_models) out.failures.push_back({rep, v.label, why});
    };
    SimulatedCohort cohort;
    std::vector<TransitionFit> shared;
    try {
      auto cfg = base_cfg;
      cfg.seed = s.base_seed + rep;
      cohort = simulate_cohort(cfg);
      for (int id : {1, 2}) {
        shared.push_back(fit_transition(truth_model, id, cohort.long_rows, s.fit));
        if (!shared.back().converged) {
          fail_all("transition " + std::to_string(id) + " did not converge");
          return out;
        }
      }
    } catch (const std::exception& e) {
      fail_all(e.what());
      return out;
    }

    auto add_parameters = [&](const ModelSpec& model, const FitResult& fit, int id,
                              const std::string& label) {
      const auto names = natural_parameter_names(model);
      const auto off = model.parameter_offset(id);
      const auto& t = fit.model.transition(id);
      const auto truths = parameter_truths(truth_model.transition(id), t);
      const auto theta = fit.internal_parameters();
      const auto se = fit.standard_errors();
      for (std::size_t i = 0; i < t.n_parameters(); ++i) {
        const auto gi = static_cast<Eigen::Index>(off + i);
        const double est = theta[gi];
        const double lo = est - z * se[gi];
        const double hi = est + z * se[gi];
        const bool log_scale = is_log_parameter(i);
        ReplicateRecord r;
        r.replicate = rep;
        r.model = label;
        r.estimand = names[off + i];
        r.estimate = log_scale ? std::exp(est) : est;
        r.se = log_scale ? r.estimate * se[gi] : se[gi];
        r.lower = log_scale ? std::exp(lo) : lo;
        r.upper = log_scale ? std::exp(hi) : hi;
        r.covered = lo <= truths[i].internal && truths[i].internal <= hi;
        out.records.push_back(r);
      }
    };

    bool common_done = false;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto& label = s.fitted_models[v].label;
      try {
        auto f3 = fit_transition(variants[v], 3, cohort.long_rows, s.fit);
        if (!f3.converged) {
          out.failures.push_back({rep, label, "transition 3 did not converge"});
          continue;
        }
        const auto fit = assemble_fit(variants[v], {shared[0], shared[1], std::move(f3)},
                                      s.fit.likelihood);
        if (!common_done) {
          add_parameters(variants[v], fit, 1, kCommon);
          add_parameters(variants[v], fit, 2, kCommon);
          common_done = true;
        }
        add_parameters(variants[v], fit, 3, label);

        const auto grid = occupancy_quadrature(fit.model, s.prediction_x, s.estimand_times,
                                               s.fit.quad, false, true);
        DeltaStandardErrors ses;
        if (s.prediction_intervals) {
          ses = prediction_ci_delta(fit, s.prediction_x, s.estimand_times, PredictionTarget::Both,
                                    s.fit.quad);
        }
        for (std::size_t k = 0; k < s.estimand_times.size(); ++k) {
          for (int j = 0; j < 3; ++j) {
            for (bool is_prob : {true, false}) {
              ReplicateRecord r;
              r.replicate = rep;
              r.model = label;
              r.estimand = is_prob ? prob_name(j, s.estimand_times[k]) : los_name(j, s.estimand_times[k]);
              r.estimate = is_prob ? grid.probs[k][j] : grid.los[k][j];
              if (s.prediction_intervals) {
                r.se = is_prob ? ses.prob_se[k][j] : ses.los_se[k][j];
                const auto ci = is_prob ? probability_interval(r.estimate, r.se)
                                        : los_interval(r.estimate, r.se);
                r.lower = ci.lower;
                r.upper = ci.upper;
              } else {
                r.se = std::nan("");
                r.lower = r.upper = std::nan("");
              }
              const double truth = result.truths.at(r.estimand);
              r.covered = r.lower <= truth && truth <= r.upper;
              out.records.push_back(r);
            }
          }
        }
      } catch (const std::exception& e) {
        out.failures.push_back({rep, label, e.what()});
      }
    }
    if (!common_done) out.failures.push_back({rep, kCommon, "no fitted model completed"});
    return out;
  };

  std::vector<ReplicateOutput> outputs(s.n_sim);
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t rep; (rep = next.fetch_add(1)) < s.n_sim;) {
      outputs[rep] = run_replicate(rep);
      const auto d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(d, s.n_sim);
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(s.threads, static_cast<unsigned>(s.n_sim)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::map<std::string, std::size_t> failure_count;
  for (auto& o : outputs) {
    for (auto& f : o.failures) ++failure_count[f.model];
    result.replicates.insert(result.replicates.end(), o.records.begin(), o.records.end());
    result.failures.insert(result.failures.end(), o.failures.begin(), o.failures.end());
  }

  // Aggregate in first-appearance order of (estimand, model).
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const ReplicateRecord*>> groups;
  for (const auto& r : result.replicates) {
    auto key = std::make_pair(r.estimand, r.model);
    auto& g = groups[key];
    if (g.empty()) keys.push_back(key);
    g.push_back(&r);
  }
  for (const auto& key : keys) {
    const auto& g = groups[key];
    AggregateRecord a;
    a.estimand = key.first;
    a.model = key.second;
    a.truth = result.truths.at(key.first);
    a.failures = failure_count[key.second];
    if (g.size() < 2) {
      result.warnings.push_back(key.first + " under " + key.second +
                                ": fewer than 2 successful replicates");
      continue;
    }
    std::vector<double> est;
    std::vector<bool> covered;
    for (const auto* r : g) {
      est.push_back(r->estimate);
      covered.push_back(r->covered);
    }
    a.perf = performance_measures(est, covered, a.truth);
    if (std::any_of(g.begin(), g.end(), [](const ReplicateRecord* r) { return std::isnan(r->se); })) {
      a.perf.coverage = a.perf.mcse_coverage = std::nan("");
    }
    if (a.perf.zero_variance) {
      result.warnings.push_back(key.first + " under " + key.second +
                                ": zero empirical variance, MCSE of bias set to 0");
    }
    result.aggregates.push_back(a);
  }
  for (const auto& [model, count] : failure_count) {
    if (static_cast<double>(count) > 0.05 * static_cast<double>(s.n_sim)) {
      result.flagged = true;
      result.warnings.push_back(model + ": " + std::to_string(count) + " of " +
                                std::to_string(s.n_sim) + " replicates failed");
    }
  }
  return result;
}

}  // namespace msmt
