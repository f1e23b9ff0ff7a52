#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "msmt/errors.hpp"
#include "msmt/io.hpp"

using namespace msmt;

namespace {

const char* kFixtureWide =
    "id,rf,rfi,os,osi\n"
    "1,4.9253936,0,4.9253936,0\n"
    "1371,1.3798767,1,2.0287473,1\n";

CsvTable table_of(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

std::string text_of(const CsvTable& t) {
  std::ostringstream out;
  write_csv(out, t);
  return out.str();
}

std::uint64_t bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

std::string config_path(const char* name) { return std::string(MSMT_SOURCE_DIR) + "/configs/" + name; }

}  // namespace

TEST_CASE("doubles survive text round trips bit for bit") {
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::uint64_t> any;
  int checked = 0;
  for (int i = 0; i < 20000; ++i) {
    double v;
    const auto b = any(gen);
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    CHECK(bits(parse_double(format_double(v), "x")) == bits(v));
    ++checked;
  }
  CHECK(checked > 19000);
  CHECK(format_double(4.9253936) == "4.9253936");
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::isnan(parse_double(format_double(std::nan("")), "x")));
  CHECK_THROWS_AS(parse_double("1.5x", "here"), DataError);
  CHECK_THROWS_AS(parse_double("", "here"), DataError);
}

TEST_CASE("csv reader and writer") {
  const auto t = table_of("a, b ,c\r\n1,\"x,y\",3\n\n4,5,6\n");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x,y");
  CHECK(t.column("c") == 2);
  CHECK_FALSE(t.find_column("z"));
  CHECK_THROWS_AS(t.column("z"), DataError);

  CsvTable odd{{"k", "v"}, {{"quote\"d", "back\\slash"}, {"com,ma", "plain"}}};
  const auto back = table_of(text_of(odd));
  CHECK(back.header == odd.header);
  CHECK(back.rows == odd.rows);

  try {
    table_of("a,b\n1,2\n3\n");
    FAIL("short row accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(table_of(""), DataError);
  CHECK_THROWS_AS(read_csv_file("/nonexistent/file.csv"), IoError);
}

TEST_CASE("two-subject wide fixture reshapes to the reference listing") {
  const auto wide = wide_from_csv(table_of(kFixtureWide));
  const LongData d{wide.covariate_names, reshape_wide_to_long(wide.records, ModelSpec::illness_death_matrix())};
  CHECK(text_of(long_to_csv(d)) ==
        "id,start,stop,from,to,status,trans\n"
        "1,0,4.9253936,1,2,0,1\n"
        "1,0,4.9253936,1,3,0,2\n"
        "1371,0,1.3798767,1,2,1,1\n"
        "1371,0,1.3798767,1,3,0,2\n"
        "1371,1.3798767,2.0287473,2,3,1,3\n");
}

TEST_CASE("wide and long files round trip losslessly") {
  const auto cohort = fixture::paper_cohort(TimescaleCase::Both, 5, 300);
  const std::vector<std::string> names{"age", "trt"};
  const WideData wide{names, cohort.wide};
  const auto wide_back = wide_from_csv(table_of(text_of(wide_to_csv(wide))));
  CHECK(wide_back.covariate_names == names);
  CHECK(wide_back.records == cohort.wide);

  const LongData lng{names, cohort.long_rows};
  const auto long_back = long_from_csv(table_of(text_of(long_to_csv(lng))));
  CHECK(long_back.rows == cohort.long_rows);

  // reshaping the written wide file gives the engine's own long rows
  CHECK(reshape_wide_to_long(wide_back.records, ModelSpec::illness_death_matrix()) == cohort.long_rows);
}

TEST_CASE("wide and long schema errors name the place") {
  CHECK_THROWS_AS(wide_from_csv(table_of("pid,rf,rfi,os,osi\n1,1,0,1,0\n")), DataError);
  CHECK_THROWS_AS(wide_from_csv(table_of("id,rf,rfi,os,osi,x,x\n1,1,0,1,0,1,1\n")), DataError);
  try {
    wide_from_csv(table_of("id,rf,rfi,os,osi\n1,1,0,1,0\n2,1,2,1,0\n"));
    FAIL("indicator 2 accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3, column rfi") != std::string::npos);
  }
  CHECK_THROWS_AS(long_from_csv(table_of("id,start,stop,from,to,status\n1,0,1,1,2,0\n")), DataError);
  CHECK_THROWS_AS(long_from_csv(table_of("id,start,stop,from,to,status,trans\n1,0,abc,1,2,0,1\n")),
                  DataError);
}

TEST_CASE("long rows get entry times from their origin state") {
  const auto d = long_from_csv(table_of(
      "id,start,stop,from,to,status,trans,z\n1,0,1.5,1,2,1,1,3\n1,1.5,2,2,3,1,3,3\n"));
  CHECK(d.rows[0].entry_time == 0.0);
  CHECK(d.rows[1].entry_time == 1.5);
  CHECK(d.covariate_names == std::vector<std::string>{"z"});
}

TEST_CASE("covariate selection reorders columns") {
  LongData d{{"a", "b", "c"}, {LongRecord{1, 0.0, 1.0, 1, 2, 0, 1, 0.0, {1.0, 2.0, 3.0}}}};
  const auto s = select_covariates(d, {"c", "a"});
  CHECK(s.covariate_names == std::vector<std::string>{"c", "a"});
  CHECK(s.rows[0].covariates == std::vector<double>{3.0, 1.0});
  CHECK_THROWS_AS(select_covariates(d, {"zz"}), DataError);
}

TEST_CASE("shipped config describes the Both scenario") {
  const auto cfg = read_config_file(config_path("paper_both.json"));
  const auto& m = cfg.model;
  REQUIRE(m.is_illness_death());
  CHECK(m.covariate_names() == std::vector<std::string>{"age", "treatment"});
  for (int id = 1; id <= 3; ++id) {
    CHECK(m.transition(id).lambda() == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(m.transition(id).gamma() == doctest::Approx(1.3).epsilon(1e-15));
    CHECK(std::vector<double>(m.transition(id).beta().begin(), m.transition(id).beta().end()) ==
          std::vector<double>{0.01, 0.5});
  }
  CHECK(m.transition(3).timescale_case() == TimescaleCase::Both);
  CHECK(*m.transition(3).delta1() == 0.1);
  CHECK(cfg.generators.size() == 2);
  CHECK(cfg.generators[0].sd == 13.0);
  CHECK(cfg.censoring_time == 6.0);
  REQUIRE(cfg.study);
  CHECK(cfg.study->n_sim == 200);
  CHECK(cfg.study->fitted_models.size() == 2);
  CHECK(cfg.study->fitted_models[1].model == TimescaleCase::ClockForward);
  CHECK(cfg.study->prediction_x == std::vector<double>{0.0, 0.0});

  const auto markov = read_config_file(config_path("paper_markov.json"));
  CHECK(markov.model.transition(3).timescale_case() == TimescaleCase::ClockForward);
}

TEST_CASE("config validation") {
  const std::string model =
      R"("model": {"covariates": ["x"], "transitions": [
        {"id": 1, "from": 1, "to": 2, "covariates": ["x"]},
        {"id": 2, "from": 1, "to": 3},
        {"id": 3, "from": 2, "to": 3, "timescale": "time_since_entry", "delta2": 0.2}]})";
  const auto ok = parse_config(R"({"schema": "msmt-config/1", )" + model + "}");
  CHECK(*ok.model.transition(3).delta2() == 0.2);
  CHECK(ok.model.transition(1).beta()[0] == 0.0);
  CHECK_FALSE(ok.study);

  CHECK_THROWS_AS(parse_config(R"({"schema": "msmt-config/2", )" + model + "}"), DataError);
  CHECK_THROWS_AS(parse_config(R"({"schema": "msmt-config/1", "modle": {}})"), DataError);
  CHECK_THROWS_AS(parse_config("{not json"), DataError);
  CHECK_THROWS_AS(parse_config(R"({"schema": "msmt-config/1", "model": {"transitions": [
        {"id": 1, "from": 1, "to": 2, "covariates": ["y"]}]}})"),
                  DataError);
  CHECK_THROWS_AS(parse_config(R"({"schema": "msmt-config/1", "model": {"transitions": [
        {"id": 1, "from": 1, "to": 2, "delta1": 0.1}]}})"),
                  DataError);
  CHECK_THROWS_AS(parse_config(R"({"schema": "msmt-config/1", "model": {"transitions": [
        {"id": "one", "from": 1, "to": 2}]}})"),
                  DataError);
  CHECK_THROWS_AS(parse_config(R"({"schema": "msmt-config/1", )" + model +
                               R"(, "simulation": {"covariates": []}})"),
                  DataError);
}

TEST_CASE("model json round trip") {
  for (auto c : {TimescaleCase::ClockForward, TimescaleCase::TimeAtEntry, TimescaleCase::TimeSinceEntry,
                 TimescaleCase::Both, TimescaleCase::ClockReset}) {
    const auto m = fixture::paper_model(c);
    const auto back = model_from_json(model_to_json(m));
    CHECK(back.transition(3).timescale_case() == c);
    CHECK(back.covariate_names() == m.covariate_names());
    const auto a = m.internal_parameters();
    const auto b = back.internal_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-15));
  }
}

TEST_CASE("fit file round trip is exact") {
  const auto cohort = fixture::paper_cohort(TimescaleCase::Both, 11, 1500);
  const auto fit = fit_model(fixture::paper_model(TimescaleCase::Both), cohort.long_rows);
  const auto back = fit_from_json(fit_to_json(fit));
  CHECK(back.converged == fit.converged);
  CHECK(back.loglik == fit.loglik);
  CHECK(back.likelihood == fit.likelihood);
  const auto a = fit.internal_parameters();
  const auto b = back.internal_parameters();
  REQUIRE(a.size() == b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(bits(a[i]) == bits(b[i]));
  CHECK((back.covariance.array() == fit.covariance.array()).all());
  CHECK(back.transition(3).iterations == fit.transition(3).iterations);
  CHECK(back.transition(3).n_events == fit.transition(3).n_events);

  CHECK_THROWS_AS(fit_from_json(R"({"schema": "msmt-fit/1"})"), DataError);
  CHECK_THROWS_AS(fit_from_json(R"({"schema": "msmt-config/1"})"), DataError);
}

TEST_CASE("parameter table") {
  const auto cohort = fixture::paper_cohort(TimescaleCase::TimeAtEntry, 12, 1500);
  const auto fit = fit_model(fixture::paper_model(TimescaleCase::TimeAtEntry), cohort.long_rows);
  const auto t = parameter_table(fit);
  REQUIRE(t.rows.size() == fit.model.n_parameters());
  CHECK(t.rows[0][0] == "t1.lambda");
  const double lambda = parse_double(t.rows[0][1], "");
  const double se = parse_double(t.rows[0][2], "");
  CHECK(lambda == doctest::Approx(fit.model.transition(1).lambda()));
  CHECK(se == doctest::Approx(lambda * fit.standard_errors()[0]));
  // log-scale interval is symmetric in log
  const double lo = parse_double(t.rows[0][3], ""), hi = parse_double(t.rows[0][4], "");
  CHECK(std::log(lambda) - std::log(lo) == doctest::Approx(std::log(hi) - std::log(lambda)));
  CHECK(t.rows.back()[0] == "t3.delta1");
  const double d = parse_double(t.rows.back()[1], "");
  CHECK(parse_double(t.rows.back()[4], "") - d == doctest::Approx(d - parse_double(t.rows.back()[3], "")));
}

TEST_CASE("prediction table is tidy") {
  const auto m = fixture::paper_model(TimescaleCase::ClockForward);
  const std::vector<double> x{0.0, 0.0}, times{1.0, 2.0};
  auto grid = occupancy_quadrature(m, x, times);
  const auto plain = prediction_table(grid, m, "cf");
  REQUIRE(plain.rows.size() == 12);
  CHECK(plain.header == std::vector<std::string>{"time", "state", "measure", "estimate", "se", "lower",
                                                 "upper", "method", "model"});
  CHECK(plain.rows[0][1] == "healthy");
  CHECK(plain.rows[3][2] == "length_of_stay");
  CHECK(plain.rows[0][4].empty());
  CHECK(plain.rows[11][8] == "cf");
  CHECK(parse_double(plain.rows[0][3], "") == grid.probs[0][0]);

  grid.prob_se.assign(2, {0.01, 0.01, 0.01});
  grid.los_se.assign(2, {0.01, 0.01, 0.01});
  const auto with_ci = prediction_table(grid, m, "cf");
  const double lo = parse_double(with_ci.rows[0][5], ""), hi = parse_double(with_ci.rows[0][6], "");
  CHECK(lo < grid.probs[0][0]);
  CHECK(hi > grid.probs[0][0]);
}
