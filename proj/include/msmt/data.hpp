#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msmt/model.hpp"

namespace msmt {

// One subject in wide format: intermediate event (rf, rfi) and terminal
// event (os, osi), times in years.
struct WideRecord {
  std::int64_t id = 0;
  double rf = 0.0;
  int rfi = 0;
  double os = 0.0;
  int osi = 0;
  std::vector<double> covariates;

  bool operator==(const WideRecord&) const = default;
};

// One row of transition-format data: at risk for `trans` over (start, stop].
// `entry_time` is the time the subject entered state `from` (r for ill -> dead).
struct LongRecord {
  std::int64_t id = 0;
  double start = 0.0;
  double stop = 0.0;
  int from = 0;
  int to = 0;
  int status = 0;
  int trans = 0;
  std::optional<double> entry_time;
  std::vector<double> covariates;

  bool operator==(const LongRecord&) const = default;
};

// Illness-death reshape. Per subject: transition 1 at risk over (0, rf];
// transition 2 over (0, rf] for relapsers and (0, os] otherwise; relapsers get
// a third row (rf, os].
// Rejects rf > os, negative times, bad indicators, duplicate ids and
// zero-length intervals, naming the offending record.
std::vector<LongRecord> reshape_wide_to_long(std::span<const WideRecord> wide,
                                             const ModelSpec::TransitionMatrix& tmat);

// Checks the long-format invariants against a model (stop > start, status in
// {0,1}, known transition ids, consistent from/to, covariate width).
void validate_long(std::span<const LongRecord> rows, const ModelSpec& model);

}  // namespace msmt
