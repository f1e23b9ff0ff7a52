#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msmt/data.hpp"
#include "msmt/estimation.hpp"
#include "msmt/model.hpp"
#include "msmt/prediction.hpp"
#include "msmt/simulation.hpp"
#include "msmt/study.hpp"

namespace msmt {

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);
double parse_double(const std::string& field, const std::string& where);

// Header plus string cells. Quoted fields with embedded commas are accepted.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find_column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in, const std::string& source = "input");
CsvTable read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv_file(const std::string& path, const CsvTable& table);

// Wide schema: id,rf,rfi,os,osi,<covariates...>
struct WideData {
  std::vector<std::string> covariate_names;
  std::vector<WideRecord> records;
};
// Long schema: id,start,stop,from,to,status,trans,<covariates...>. The entry
// time of a row out of state 1 is 0, otherwise its start.
struct LongData {
  std::vector<std::string> covariate_names;
  std::vector<LongRecord> rows;
};

WideData wide_from_csv(const CsvTable& t);
CsvTable wide_to_csv(const WideData& d);
LongData long_from_csv(const CsvTable& t);
CsvTable long_to_csv(const LongData& d);

// Reorders covariate columns to `names`; missing names are a DataError.
LongData select_covariates(const LongData& d, const std::vector<std::string>& names);

// Configuration file "msmt-config/1" (JSON, documented in README.md).
struct RunConfig {
  ModelSpec model;
  QuadratureConfig quad{};
  FitOptions fit{};
  std::vector<CovariateGenerator> generators{};
  std::size_t n_subjects = 2000;
  double censoring_time = 6.0;
  std::uint64_t seed = 1;
  std::optional<Scenario> study{};
};

RunConfig parse_config(const std::string& text);
RunConfig read_config_file(const std::string& path);
std::string model_to_json(const ModelSpec& model);
ModelSpec model_from_json(const std::string& text);

// Fit file "msmt-fit/1": model layout plus per-transition internal estimates
// and covariance, reproduced bit-for-bit on reading.
std::string fit_to_json(const FitResult& fit);
FitResult fit_from_json(const std::string& text);
void write_fit_file(const std::string& path, const FitResult& fit);
FitResult read_fit_file(const std::string& path);

// parameter,estimate,se,lower,upper on the natural scale; intervals are Wald
// on the internal scale and transformed back.
CsvTable parameter_table(const FitResult& fit, double level = 0.95);

// Tidy rows: time,state,measure,estimate,se,lower,upper,method,model
CsvTable prediction_table(const PredictionGrid& grid, const ModelSpec& model,
                          const std::string& label, double level = 0.95);

CsvTable replicate_table(const ScenarioResult& r);
CsvTable aggregate_table(const ScenarioResult& r);
CsvTable failure_table(const ScenarioResult& r);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace msmt
