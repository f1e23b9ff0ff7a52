#include <doctest.h>

#include <cmath>
#include <random>

#include "msmt/errors.hpp"
#include "msmt/model.hpp"
#include "oracles.hpp"

using namespace msmt;

namespace {

const std::vector<double> kNoX{};

TransitionSpec weibull(double lambda, double gamma, std::optional<double> d1 = {},
                       std::optional<double> d2 = {}, int id = 3, int from = 2, int to = 3) {
  return TransitionSpec(id, from, to, lambda, gamma, {}, {}, d1, d2);
}

}  // namespace

TEST_CASE("hazard examples") {
  CHECK(hazard(weibull(0.1, 1.3), 1.0, std::nullopt, kNoX) == doctest::Approx(0.13).epsilon(1e-15));
  for (double t : {0.01, 1.0, 7.5}) {
    CHECK(hazard(weibull(1.0, 1.0), t, std::nullopt, kNoX) == doctest::Approx(1.0).epsilon(1e-15));
  }
  // mpmath: 0.13 * 3^0.3 * e^0.3
  CHECK(hazard(weibull(0.1, 1.3, 0.1, 0.1), 3.0, 2.0, kNoX) ==
        doctest::Approx(0.243987778776198817).epsilon(1e-13));
}

TEST_CASE("hazard error paths") {
  CHECK_THROWS_AS(hazard(weibull(0.1, 1.3, 0.1), 3.0, std::nullopt, kNoX), ContractViolation);
  CHECK_THROWS_AS(hazard(weibull(0.1, 1.3), 0.0, std::nullopt, kNoX), DomainError);
  CHECK_THROWS_AS(hazard(weibull(0.1, 1.3), -1.0, std::nullopt, kNoX), DomainError);
  CHECK_THROWS_AS(hazard(weibull(0.1, 1.3, {}, 0.1), 1.0, 2.0, kNoX), ContractViolation);
  CHECK_THROWS_AS(weibull(-0.1, 1.3), ContractViolation);
  CHECK_THROWS_AS(weibull(0.1, 0.0), ContractViolation);
}

TEST_CASE("covariates enter through the linear predictor") {
  TransitionSpec t(1, 1, 2, 0.1, 1.3, {0, 1}, {0.01, 0.5});
  const std::vector<double> x{10.0, 1.0};
  CHECK(hazard(t, 1.0, std::nullopt, x) == doctest::Approx(0.13 * std::exp(0.6)).epsilon(1e-14));
  CHECK_THROWS_AS(hazard(t, 1.0, std::nullopt, std::vector<double>{1.0}), ContractViolation);
}

TEST_CASE("cumulative hazard examples") {
  CHECK(cumulative_hazard(weibull(0.1, 1.3), 0.0, 5.0, std::nullopt, kNoX) ==
        doctest::Approx(0.810328298346381218).epsilon(1e-14));
  CHECK(cumulative_hazard(weibull(0.1, 1.3, 0.2, 0.3), 2.5, 2.5, 1.0, kNoX) == 0.0);
  // delta2 = 0 collapses the quadrature route onto the closed form.
  for (auto [a, b] : {std::pair{0.0, 5.0}, {1.0, 3.0}, {0.2, 17.0}}) {
    const double closed = cumulative_hazard(weibull(0.1, 1.3), a, b, std::nullopt, kNoX);
    const double quad = cumulative_hazard(weibull(0.1, 1.3, {}, 0.0), a, b, a, kNoX);
    CHECK(std::abs(quad - closed) < 1e-10);
  }
  CHECK_THROWS_AS(cumulative_hazard(weibull(0.1, 1.3), 2.0, 1.0, std::nullopt, kNoX),
                  ContractViolation);
}

TEST_CASE("conditional survival examples") {
  CHECK(conditional_survival(weibull(0.1, 1.3, 0.1, 0.1), 2.0, 2.0, kNoX) == 1.0);
  CHECK(conditional_survival(weibull(0.1, 1.3), 5.0, 0.0, kNoX) ==
        doctest::Approx(0.444712044026160186).epsilon(1e-14));
  const double want = std::exp(-oracle::cumhaz(0.1, 1.3, 0.0, 0.1, 0.0, 2.0, 2.0, 4.0));
  const double got = conditional_survival(weibull(0.1, 1.3, 0.1), 4.0, 2.0, kNoX);
  CHECK(std::abs(got - want) <= 1e-8);
  CHECK(got == doctest::Approx(0.644181009615445706).epsilon(1e-14));
}

TEST_CASE("quadrature matches the trapezoid oracle on random inputs") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  std::uniform_real_distribution<double> del(-0.3, 0.3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const double lambda = pos(gen), gamma = pos(gen), d1 = del(gen), d2 = del(gen);
    const double t = 20.0 * unit(gen) + 1e-3;
    const double r = t * unit(gen);
    const double a = trial % 3 == 0 ? 0.0 : r;
    const auto spec = weibull(lambda, gamma, d1, d2);
    const double got = cumulative_hazard(spec, a, t, r, kNoX);
    const double want = oracle::cumhaz(lambda, gamma, 0.0, d1, d2, r, a, t);
    INFO("trial " << trial << " lambda=" << lambda << " gamma=" << gamma << " d2=" << d2
                  << " a=" << a << " t=" << t);
    CHECK(std::abs(got - want) <= 1e-8 * std::abs(want));
  }
}

TEST_CASE("cumulative hazard is additive and monotone") {
  const auto spec = weibull(0.7, 0.8, -0.2, 0.25);
  const double r = 0.4;
  double prev = 0.0;
  for (double b = 0.5; b < 15.0; b += 0.75) {
    const double h = cumulative_hazard(spec, r, b, r, kNoX);
    CHECK(h >= prev);
    prev = h;
    const double mid = 0.5 * (r + b);
    const double split = cumulative_hazard(spec, r, mid, r, kNoX) +
                         cumulative_hazard(spec, mid, b, r, kNoX);
    CHECK(std::abs(split - h) <= 1e-10 * std::max(1.0, h));
  }
}

TEST_CASE("conditional survival lies in (0, 1] and is nonincreasing") {
  const auto spec = weibull(0.3, 1.6, 0.1, 0.1);
  double prev = 1.0;
  for (double t = 1.5; t < 10.0; t += 0.5) {
    const double s = conditional_survival(spec, t, 1.5, kNoX);
    CHECK(s <= prev);
    CHECK(s > 0.0);
    prev = s;
  }
}

TEST_CASE("zero timescale coefficients reproduce the single-timescale Weibull") {
  const auto base = weibull(0.2, 1.4);
  for (auto c : {TimescaleCase::TimeAtEntry, TimescaleCase::TimeSinceEntry, TimescaleCase::Both}) {
    const auto nested = base.with_case(c, 0.0);
    CHECK(nested.timescale_case() == c);
    CHECK(hazard(nested, 3.0, 1.0, kNoX) == doctest::Approx(hazard(base, 3.0, {}, kNoX)).epsilon(1e-15));
    CHECK(std::abs(conditional_survival(nested, 6.0, 1.0, kNoX) -
                   conditional_survival(base, 6.0, 1.0, kNoX)) < 1e-12);
  }
}

TEST_CASE("illness-death model structure and parameter vector") {
  const auto m = ModelSpec::illness_death(TransitionSpec(1, 1, 2, 0.1, 1.3, {0, 1}, {0.01, 0.5}),
                                          TransitionSpec(2, 1, 3, 0.1, 1.3, {0, 1}, {0.01, 0.5}),
                                          TransitionSpec(3, 2, 3, 0.1, 1.3, {0, 1}, {0.01, 0.5}, 0.1, 0.1),
                                          {"age", "trt"});
  CHECK(m.is_illness_death());
  CHECK(m.is_absorbing(3));
  CHECK_FALSE(m.is_absorbing(1));
  CHECK(m.n_parameters() == 4 + 4 + 6);
  CHECK(m.parameter_offset(3) == 8);
  const auto theta = m.internal_parameters();
  CHECK(theta[0] == doctest::Approx(std::log(0.1)));
  const auto back = m.with_internal_parameters(theta);
  CHECK(back.transition(3).gamma() == doctest::Approx(1.3).epsilon(1e-15));
  CHECK(*back.transition(3).delta2() == 0.1);
  CHECK(m.parameter_names()[12] == "t3.delta1");
  CHECK(m.parameter_names()[2] == "t1.beta[age]");
}

TEST_CASE("model validation") {
  // entry-time terms are not allowed out of the initial state
  CHECK_THROWS_AS(ModelSpec::illness_death(TransitionSpec(1, 1, 2, 0.1, 1.3, {}, {}, 0.1),
                                           TransitionSpec(2, 1, 3, 0.1, 1.3),
                                           TransitionSpec(3, 2, 3, 0.1, 1.3), {}),
                  ContractViolation);
  // transition endpoints must match the matrix
  CHECK_THROWS_AS(ModelSpec::illness_death(TransitionSpec(1, 1, 3, 0.1, 1.3),
                                           TransitionSpec(2, 1, 2, 0.1, 1.3),
                                           TransitionSpec(3, 2, 3, 0.1, 1.3), {}),
                  ContractViolation);
  auto bad = ModelSpec::illness_death_matrix();
  bad[0][0] = 1;
  CHECK_THROWS_AS(ModelSpec({"a", "b", "c"}, bad,
                            {TransitionSpec(1, 1, 2, 0.1, 1.3), TransitionSpec(2, 1, 3, 0.1, 1.3),
                             TransitionSpec(3, 2, 3, 0.1, 1.3)},
                            {}),
                  ContractViolation);
  CHECK(parse_timescale_case("both") == TimescaleCase::Both);
  CHECK_THROWS_AS(parse_timescale_case("spline"), DataError);
}

TEST_CASE("clock-reset transitions run on time since entry") {
  const auto cr = weibull(0.1, 1.3).with_case(TimescaleCase::ClockReset);
  CHECK(cr.timescale_case() == TimescaleCase::ClockReset);
  CHECK(cr.n_parameters() == 2);
  CHECK(hazard(cr, 3.0, 2.0, kNoX) == doctest::Approx(0.13).epsilon(1e-14));
  CHECK(hazard(cr, 4.0, 2.0, kNoX) == doctest::Approx(hazard(weibull(0.1, 1.3), 2.0, {}, kNoX)).epsilon(1e-14));
  CHECK_THROWS_AS(hazard(cr, 2.0, 2.0, kNoX), DomainError);
  CHECK_THROWS_AS(hazard(cr, 3.0, std::nullopt, kNoX), ContractViolation);
  CHECK(cumulative_hazard(cr, 2.0, 7.0, 2.0, kNoX) == doctest::Approx(0.810328298346381218).epsilon(1e-14));
  CHECK(conditional_survival(cr, 6.5, 1.5, kNoX) ==
        doctest::Approx(conditional_survival(weibull(0.1, 1.3), 5.0, 0.0, kNoX)).epsilon(1e-14));
  const auto theta = cr.internal_parameters();
  CHECK(cr.with_internal_parameters(theta).clock_reset());
  CHECK(parse_timescale_case("clock_reset") == TimescaleCase::ClockReset);
  CHECK_THROWS_AS(ModelSpec::illness_death(
                      TransitionSpec(1, 1, 2, 0.1, 1.3).with_case(TimescaleCase::ClockReset),
                      TransitionSpec(2, 1, 3, 0.1, 1.3), TransitionSpec(3, 2, 3, 0.1, 1.3), {}),
                  ContractViolation);
}
