#include "msmt/io.hpp"

#include <boost/tokenizer.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "msmt/errors.hpp"

namespace msmt {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::int64_t parse_int(const std::string& field, const std::string& where) {
  std::int64_t v = 0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw DataError(where + ": '" + field + "' is not an integer");
  }
  return v;
}

int parse_indicator(const std::string& field, const std::string& where) {
  const auto v = parse_int(field, where);
  if (v != 0 && v != 1) throw DataError(where + ": indicator must be 0 or 1, got " + field);
  return static_cast<int>(v);
}

std::string cell_name(std::size_t row, const std::string& column) {
  // row numbers count the header as line 1
  return "line " + std::to_string(row + 2) + ", column " + column;
}

void check_header(const CsvTable& t, const std::vector<std::string>& fixed, const char* schema) {
  if (t.header.size() < fixed.size() ||
      !std::equal(fixed.begin(), fixed.end(), t.header.begin())) {
    std::string want;
    for (const auto& f : fixed) want += (want.empty() ? "" : ",") + f;
    throw DataError(std::string(schema) + " CSV must start with columns " + want);
  }
  std::set<std::string> seen;
  for (const auto& h : t.header) {
    if (!seen.insert(h).second) throw DataError("duplicate column '" + h + "'");
  }
}

// Rejects keys outside `allowed` so that typos in a config surface early.
void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw DataError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw DataError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("config key '") + key + "' has the wrong type");
  }
}

double json_double(const json& v) {
  if (v.is_null()) return std::nan("");
  return v.get<double>();
}

json model_json(const ModelSpec& model) {
  json transitions = json::array();
  for (const auto& t : model.transitions()) {
    json names = json::array();
    for (auto idx : t.covariate_index()) names.push_back(model.covariate_names()[idx]);
    json jt = {{"id", t.id()},
               {"from", t.from_state()},
               {"to", t.to_state()},
               {"lambda", t.lambda()},
               {"gamma", t.gamma()},
               {"covariates", names},
               {"beta", std::vector<double>(t.beta().begin(), t.beta().end())},
               {"timescale", std::string(to_string(t.timescale_case()))}};
    if (t.delta1()) jt["delta1"] = *t.delta1();
    if (t.delta2()) jt["delta2"] = *t.delta2();
    transitions.push_back(jt);
  }
  return {{"states", model.states()},
          {"covariates", model.covariate_names()},
          {"transitions", transitions}};
}

ModelSpec model_of(const json& m) {
  check_keys(m, "model", {"states", "covariates", "transitions"});
  const auto states = get_or<std::vector<std::string>>(
      m, "states", std::vector<std::string>{"healthy", "ill", "dead"});
  const auto covariates = get_or<std::vector<std::string>>(m, "covariates", {});
  if (!m.contains("transitions") || !m["transitions"].is_array()) {
    throw DataError("model: 'transitions' must be a list");
  }
  ModelSpec::TransitionMatrix matrix(states.size(), std::vector<std::optional<int>>(states.size()));
  std::vector<TransitionSpec> transitions;
  for (const auto& jt : m["transitions"]) {
    check_keys(jt, "transition",
               {"id", "from", "to", "lambda", "gamma", "covariates", "beta", "timescale", "delta1",
                "delta2"});
    if (!jt.contains("id") || !jt.contains("from") || !jt.contains("to")) {
      throw DataError("transition: 'id', 'from' and 'to' are required");
    }
    const int id = jt["id"].get<int>();
    const int from = jt["from"].get<int>();
    const int to = jt["to"].get<int>();
    const std::string at = "transition " + std::to_string(id);
    if (from < 1 || to < 1 || from > static_cast<int>(states.size()) ||
        to > static_cast<int>(states.size())) {
      throw DataError(at + ": state out of range");
    }
    matrix[from - 1][to - 1] = id;
    const auto names = get_or<std::vector<std::string>>(jt, "covariates", {});
    std::vector<std::size_t> index;
    for (const auto& n : names) {
      const auto pos = std::find(covariates.begin(), covariates.end(), n);
      if (pos == covariates.end()) throw DataError(at + ": unknown covariate '" + n + "'");
      index.push_back(static_cast<std::size_t>(pos - covariates.begin()));
    }
    auto beta = get_or<std::vector<double>>(jt, "beta", std::vector<double>(names.size(), 0.0));
    if (beta.size() != names.size()) throw DataError(at + ": one beta per covariate required");
    const auto c = parse_timescale_case(get_or<std::string>(jt, "timescale", "clock_forward"));
    std::optional<double> d1, d2;
    if (has_delta1(c)) d1 = get_or<double>(jt, "delta1", 0.0);
    if (has_delta2(c)) d2 = get_or<double>(jt, "delta2", 0.0);
    if ((!has_delta1(c) && jt.contains("delta1")) || (!has_delta2(c) && jt.contains("delta2"))) {
      throw DataError(at + ": delta given that timescale '" + std::string(to_string(c)) +
                      "' does not use");
    }
    TransitionSpec spec(id, from, to, get_or<double>(jt, "lambda", 1.0), get_or<double>(jt, "gamma", 1.0),
                        std::move(index), std::move(beta), d1, d2);
    if (c == TimescaleCase::ClockReset) spec = spec.with_case(c);
    transitions.push_back(std::move(spec));
  }
  std::sort(transitions.begin(), transitions.end(),
            [](const TransitionSpec& a, const TransitionSpec& b) { return a.id() < b.id(); });
  return ModelSpec(states, std::move(matrix), std::move(transitions), covariates);
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

void expect_schema(const json& j, const char* schema) {
  if (!j.is_object() || j.value("schema", "") != schema) {
    throw DataError(std::string("expected schema \"") + schema + "\"");
  }
}

std::string optional_cell(const std::vector<StateTriple>& v, std::size_t k, int j) {
  return v.empty() ? std::string() : format_double(v[k][j]);
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& field, const std::string& where) {
  if (field == "NaN" || field == "nan" || field == "NA") return std::nan("");
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw DataError(where + ": '" + field + "' is not a number");
  }
  return v;
}

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t CsvTable::column(const std::string& name) const {
  if (auto c = find_column(name)) return *c;
  throw DataError("missing column '" + name + "'");
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    try {
      Tokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
      for (const auto& c : tok) cells.push_back(trim(c));
    } catch (const boost::escaped_list_error& e) {
      throw DataError(source + ", line " + std::to_string(line_no) + ": " + e.what());
    }
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw DataError(source + ", line " + std::to_string(line_no) + ": expected " +
                      std::to_string(t.header.size()) + " fields, found " +
                      std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw DataError(source + ": no header row");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_csv(in, path);
}

void write_csv(std::ostream& out, const CsvTable& table) {
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      if (row[i].find_first_of(",\"\\") != std::string::npos) {
        out << '"';
        for (char c : row[i]) {
          if (c == '"' || c == '\\') out << '\\';
          out << c;
        }
        out << '"';
      } else {
        out << row[i];
      }
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& r : table.rows) write_row(r);
}

void write_csv_file(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, table);
  if (!out) throw IoError("failed writing '" + path + "'");
}

WideData wide_from_csv(const CsvTable& t) {
  const std::vector<std::string> fixed{"id", "rf", "rfi", "os", "osi"};
  check_header(t, fixed, "wide");
  WideData d;
  d.covariate_names.assign(t.header.begin() + 5, t.header.end());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    WideRecord w;
    w.id = parse_int(r[0], cell_name(i, "id"));
    w.rf = parse_double(r[1], cell_name(i, "rf"));
    w.rfi = parse_indicator(r[2], cell_name(i, "rfi"));
    w.os = parse_double(r[3], cell_name(i, "os"));
    w.osi = parse_indicator(r[4], cell_name(i, "osi"));
    for (std::size_t c = 5; c < r.size(); ++c) {
      w.covariates.push_back(parse_double(r[c], cell_name(i, t.header[c])));
    }
    d.records.push_back(std::move(w));
  }
  return d;
}

CsvTable wide_to_csv(const WideData& d) {
  CsvTable t{{"id", "rf", "rfi", "os", "osi"}, {}};
  t.header.insert(t.header.end(), d.covariate_names.begin(), d.covariate_names.end());
  for (const auto& w : d.records) {
    std::vector<std::string> row{std::to_string(w.id), format_double(w.rf), std::to_string(w.rfi),
                                 format_double(w.os), std::to_string(w.osi)};
    for (double x : w.covariates) row.push_back(format_double(x));
    t.rows.push_back(std::move(row));
  }
  return t;
}

LongData long_from_csv(const CsvTable& t) {
  const std::vector<std::string> fixed{"id", "start", "stop", "from", "to", "status", "trans"};
  check_header(t, fixed, "long");
  LongData d;
  d.covariate_names.assign(t.header.begin() + 7, t.header.end());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    LongRecord l;
    l.id = parse_int(r[0], cell_name(i, "id"));
    l.start = parse_double(r[1], cell_name(i, "start"));
    l.stop = parse_double(r[2], cell_name(i, "stop"));
    l.from = static_cast<int>(parse_int(r[3], cell_name(i, "from")));
    l.to = static_cast<int>(parse_int(r[4], cell_name(i, "to")));
    l.status = parse_indicator(r[5], cell_name(i, "status"));
    l.trans = static_cast<int>(parse_int(r[6], cell_name(i, "trans")));
    l.entry_time = l.from == 1 ? 0.0 : l.start;
    for (std::size_t c = 7; c < r.size(); ++c) {
      l.covariates.push_back(parse_double(r[c], cell_name(i, t.header[c])));
    }
    d.rows.push_back(std::move(l));
  }
  return d;
}

CsvTable long_to_csv(const LongData& d) {
  CsvTable t{{"id", "start", "stop", "from", "to", "status", "trans"}, {}};
  t.header.insert(t.header.end(), d.covariate_names.begin(), d.covariate_names.end());
  for (const auto& l : d.rows) {
    std::vector<std::string> row{std::to_string(l.id),   format_double(l.start), format_double(l.stop),
                                 std::to_string(l.from), std::to_string(l.to),   std::to_string(l.status),
                                 std::to_string(l.trans)};
    for (double x : l.covariates) row.push_back(format_double(x));
    t.rows.push_back(std::move(row));
  }
  return t;
}

LongData select_covariates(const LongData& d, const std::vector<std::string>& names) {
  std::vector<std::size_t> index;
  for (const auto& n : names) {
    const auto pos = std::find(d.covariate_names.begin(), d.covariate_names.end(), n);
    if (pos == d.covariate_names.end()) {
      throw DataError("covariate '" + n + "' is not a column of the data");
    }
    index.push_back(static_cast<std::size_t>(pos - d.covariate_names.begin()));
  }
  LongData out{names, d.rows};
  for (auto& row : out.rows) {
    std::vector<double> x;
    for (auto i : index) x.push_back(row.covariates[i]);
    row.covariates = std::move(x);
  }
  return out;
}

namespace {

RunConfig config_of(const json& j) {
  expect_schema(j, "msmt-config/1");
  check_keys(j, "config", {"schema", "model", "quadrature", "optimizer", "simulation", "study"});
  if (!j.contains("model")) throw DataError("config: 'model' is required");
  RunConfig cfg{.model = model_of(j["model"])};

  if (j.contains("quadrature")) {
    const auto& q = j["quadrature"];
    check_keys(q, "quadrature", {"inner_nodes", "outer_nodes"});
    cfg.quad.inner_nodes = get_or<int>(q, "inner_nodes", cfg.quad.inner_nodes);
    cfg.quad.outer_nodes = get_or<int>(q, "outer_nodes", cfg.quad.outer_nodes);
  }
  cfg.fit.quad = cfg.quad;
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    check_keys(o, "optimizer", {"likelihood", "max_iter", "gradient_tol", "loglik_rel_tol", "retry"});
    cfg.fit.likelihood = parse_likelihood_kind(get_or<std::string>(o, "likelihood", "conditional"));
    cfg.fit.max_iter = get_or<int>(o, "max_iter", cfg.fit.max_iter);
    cfg.fit.gradient_tol = get_or<double>(o, "gradient_tol", cfg.fit.gradient_tol);
    cfg.fit.loglik_rel_tol = get_or<double>(o, "loglik_rel_tol", cfg.fit.loglik_rel_tol);
    cfg.fit.retry = get_or<bool>(o, "retry", cfg.fit.retry);
  }
  if (j.contains("simulation")) {
    const auto& s = j["simulation"];
    check_keys(s, "simulation", {"n_subjects", "censoring_time", "seed", "covariates"});
    cfg.n_subjects = get_or<std::size_t>(s, "n_subjects", cfg.n_subjects);
    cfg.censoring_time = get_or<double>(s, "censoring_time", cfg.censoring_time);
    cfg.seed = get_or<std::uint64_t>(s, "seed", cfg.seed);
    for (const auto& g : s.value("covariates", json::array())) {
      check_keys(g, "simulation covariate", {"name", "distribution", "mean", "sd", "p"});
      CovariateGenerator gen;
      gen.name = get_or<std::string>(g, "name", "");
      const auto dist = get_or<std::string>(g, "distribution", "normal");
      if (dist == "normal") {
        gen.kind = CovariateGenerator::Kind::Normal;
      } else if (dist == "bernoulli") {
        gen.kind = CovariateGenerator::Kind::Bernoulli;
      } else {
        throw DataError("simulation covariate '" + gen.name + "': unknown distribution '" + dist + "'");
      }
      gen.mean = get_or<double>(g, "mean", 0.0);
      gen.sd = get_or<double>(g, "sd", 1.0);
      gen.p = get_or<double>(g, "p", 0.5);
      cfg.generators.push_back(gen);
    }
    const auto& names = cfg.model.covariate_names();
    if (cfg.generators.size() != names.size()) {
      throw DataError("simulation: one covariate generator per model covariate required");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (cfg.generators[i].name != names[i]) {
        throw DataError("simulation: generator " + std::to_string(i + 1) + " should be '" + names[i] + "'");
      }
    }
  }
  if (j.contains("study")) {
    const auto& s = j["study"];
    check_keys(s, "study",
               {"label", "n_sim", "base_seed", "estimand_times", "truth_paths", "prediction_intervals",
                "threads", "at", "fitted_models"});
    if (!j.contains("simulation")) throw DataError("study: a 'simulation' section is required");
    Scenario sc{.label = get_or<std::string>(s, "label", "scenario"), .true_model = cfg.model};
    sc.covariates = cfg.generators;
    sc.n_subjects = cfg.n_subjects;
    sc.censoring_time = cfg.censoring_time;
    sc.n_sim = get_or<std::size_t>(s, "n_sim", sc.n_sim);
    sc.base_seed = get_or<std::uint64_t>(s, "base_seed", sc.base_seed);
    sc.estimand_times = get_or<std::vector<double>>(s, "estimand_times", sc.estimand_times);
    sc.truth_paths = get_or<std::size_t>(s, "truth_paths", sc.truth_paths);
    sc.prediction_intervals = get_or<bool>(s, "prediction_intervals", sc.prediction_intervals);
    sc.threads = get_or<unsigned>(s, "threads", sc.threads);
    sc.fit = cfg.fit;
    const auto& names = cfg.model.covariate_names();
    sc.prediction_x.assign(names.size(), 0.0);
    const auto at = s.value("at", json::object());
    for (const auto& [name, value] : at.items()) {
      const auto pos = std::find(names.begin(), names.end(), name);
      if (pos == names.end()) throw DataError("study.at: unknown covariate '" + name + "'");
      sc.prediction_x[static_cast<std::size_t>(pos - names.begin())] = value.get<double>();
    }
    for (const auto& f : s.value("fitted_models", json::array())) {
      check_keys(f, "fitted model", {"label", "timescale"});
      sc.fitted_models.push_back({get_or<std::string>(f, "label", ""),
                                  parse_timescale_case(get_or<std::string>(f, "timescale", ""))});
    }
    if (sc.fitted_models.empty()) {
      sc.fitted_models = {{"correct", cfg.model.transition(3).timescale_case()},
                          {"markov", TimescaleCase::ClockForward}};
    }
    cfg.study = std::move(sc);
  }
  return cfg;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  const auto j = parse_json(text, "config");
  try {
    return config_of(j);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
}

RunConfig read_config_file(const std::string& path) { return parse_config(read_text_file(path)); }

std::string model_to_json(const ModelSpec& model) { return model_json(model).dump(2); }

ModelSpec model_from_json(const std::string& text) {
  const auto j = parse_json(text, "model");
  try {
    return model_of(j);
  } catch (const json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

std::string fit_to_json(const FitResult& fit) {
  json transitions = json::array();
  for (const auto& t : fit.transitions) {
    const auto theta = t.spec.internal_parameters();
    json cov = json::array();
    for (Eigen::Index i = 0; i < t.covariance.rows(); ++i) {
      std::vector<double> row(t.covariance.cols());
      for (Eigen::Index k = 0; k < t.covariance.cols(); ++k) row[k] = t.covariance(i, k);
      cov.push_back(row);
    }
    transitions.push_back({{"id", t.spec.id()},
                           {"parameters", theta},
                           {"names", t.spec.parameter_names(fit.model.covariate_names())},
                           {"covariance", cov},
                           {"loglik", t.loglik},
                           {"converged", t.converged},
                           {"iterations", t.iterations},
                           {"max_gradient", t.max_gradient},
                           {"n_obs", t.n_obs},
                           {"n_events", t.n_events}});
  }
  const json j{{"schema", "msmt-fit/1"},
               {"model", model_json(fit.model)},
               {"likelihood", std::string(to_string(fit.likelihood))},
               {"loglik", fit.loglik},
               {"converged", fit.converged},
               {"transitions", transitions}};
  return j.dump(2);
}

FitResult fit_from_json(const std::string& text) {
  const auto j = parse_json(text, "fit file");
  expect_schema(j, "msmt-fit/1");
  try {
    const auto layout = model_of(j.at("model"));
    std::vector<TransitionFit> fits;
    for (const auto& jt : j.at("transitions")) {
      const int id = jt.at("id").get<int>();
      const auto theta = jt.at("parameters").get<std::vector<double>>();
      auto spec = layout.transition(id).with_internal_parameters(theta);
      const auto k = static_cast<Eigen::Index>(theta.size());
      Eigen::MatrixXd cov(k, k);
      const auto& rows = jt.at("covariance");
      if (static_cast<Eigen::Index>(rows.size()) != k) {
        throw DataError("fit file: transition " + std::to_string(id) + " covariance has the wrong size");
      }
      for (Eigen::Index i = 0; i < k; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != k) {
          throw DataError("fit file: transition " + std::to_string(id) + " covariance is not square");
        }
        for (Eigen::Index c = 0; c < k; ++c) cov(i, c) = json_double(rows[i][c]);
      }
      TransitionFit f{std::move(spec), std::move(cov)};
      f.loglik = json_double(jt.at("loglik"));
      f.converged = jt.at("converged").get<bool>();
      f.iterations = jt.at("iterations").get<int>();
      f.max_gradient = json_double(jt.at("max_gradient"));
      f.n_obs = jt.at("n_obs").get<std::size_t>();
      f.n_events = jt.at("n_events").get<std::size_t>();
      fits.push_back(std::move(f));
    }
    return assemble_fit(layout, std::move(fits),
                        parse_likelihood_kind(j.at("likelihood").get<std::string>()));
  } catch (const json::exception& e) {
    throw DataError(std::string("fit file: ") + e.what());
  }
}

void write_fit_file(const std::string& path, const FitResult& fit) {
  write_text_file(path, fit_to_json(fit) + "\n");
}

FitResult read_fit_file(const std::string& path) { return fit_from_json(read_text_file(path)); }

CsvTable parameter_table(const FitResult& fit, double level) {
  CsvTable t{{"parameter", "estimate", "se", "lower", "upper"}, {}};
  const double z = normal_quantile(0.5 + 0.5 * level);
  const auto names = natural_parameter_names(fit.model);
  const auto theta = fit.internal_parameters();
  const auto se = fit.standard_errors();
  for (const auto& tr : fit.model.transitions()) {
    const auto off = fit.model.parameter_offset(tr.id());
    for (std::size_t i = 0; i < tr.n_parameters(); ++i) {
      const auto g = static_cast<Eigen::Index>(off + i);
      const bool log_scale = i < 2;
      auto nat = [&](double v) { return log_scale ? std::exp(v) : v; };
      const double est = nat(theta[g]);
      t.rows.push_back({names[off + i], format_double(est),
                        format_double(log_scale ? est * se[g] : se[g]),
                        format_double(nat(theta[g] - z * se[g])), format_double(nat(theta[g] + z * se[g]))});
    }
  }
  return t;
}

CsvTable prediction_table(const PredictionGrid& grid, const ModelSpec& model, const std::string& label,
                          double level) {
  CsvTable t{{"time", "state", "measure", "estimate", "se", "lower", "upper", "method", "model"}, {}};
  const std::string method(to_string(grid.method));
  for (std::size_t k = 0; k < grid.times.size(); ++k) {
    for (bool prob : {true, false}) {
      const auto& est = prob ? grid.probs : grid.los;
      const auto& se = prob ? grid.prob_se : grid.los_se;
      for (int j = 0; j < 3; ++j) {
        std::string lo, hi;
        if (!se.empty()) {
          const auto ci = prob ? probability_interval(est[k][j], se[k][j], level)
                               : los_interval(est[k][j], se[k][j], level);
          lo = format_double(ci.lower);
          hi = format_double(ci.upper);
        }
        t.rows.push_back({format_double(grid.times[k]), model.states()[j],
                          prob ? "probability" : "length_of_stay", format_double(est[k][j]),
                          optional_cell(se, k, j), lo, hi, method, label});
      }
    }
  }
  return t;
}

CsvTable replicate_table(const ScenarioResult& r) {
  CsvTable t{{"scenario", "replicate", "model", "estimand", "estimate", "se", "lower", "upper", "covered"}, {}};
  for (const auto& x : r.replicates) {
    t.rows.push_back({r.label, std::to_string(x.replicate), x.model, x.estimand, format_double(x.estimate),
                      format_double(x.se), format_double(x.lower), format_double(x.upper),
                      std::isnan(x.se) ? "NaN" : std::to_string(x.covered ? 1 : 0)});
  }
  return t;
}

CsvTable aggregate_table(const ScenarioResult& r) {
  CsvTable t{{"scenario", "estimand", "model", "truth", "n", "failures", "mean", "bias", "mcse_bias",
              "emp_se", "coverage", "mcse_coverage"},
             {}};
  for (const auto& a : r.aggregates) {
    t.rows.push_back({r.label, a.estimand, a.model, format_double(a.truth), std::to_string(a.perf.n),
                      std::to_string(a.failures), format_double(a.perf.mean), format_double(a.perf.bias),
                      format_double(a.perf.mcse_bias), format_double(a.perf.emp_se),
                      format_double(a.perf.coverage), format_double(a.perf.mcse_coverage)});
  }
  return t;
}

CsvTable failure_table(const ScenarioResult& r) {
  CsvTable t{{"scenario", "replicate", "model", "reason"}, {}};
  for (const auto& f : r.failures) {
    t.rows.push_back({r.label, std::to_string(f.replicate), f.model, f.reason});
  }
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace msmt
