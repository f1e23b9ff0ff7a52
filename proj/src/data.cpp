#include "msmt/data.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "msmt/errors.hpp"

namespace msmt {

namespace {

std::string where(std::size_t index, std::int64_t id) {
  return "record " + std::to_string(index + 1) + " (id " + std::to_string(id) + ")";
}

}  // namespace

std::vector<LongRecord> reshape_wide_to_long(std::span<const WideRecord> wide,
                                             const ModelSpec::TransitionMatrix& tmat) {
  if (tmat != ModelSpec::illness_death_matrix()) {
    throw ContractViolation("wide-to-long reshape supports the illness-death matrix only");
  }
  const int to_ill = *tmat[0][1];
  const int to_dead = *tmat[0][2];
  const int ill_to_dead = *tmat[1][2];

  std::vector<LongRecord> rows;
  rows.reserve(3 * wide.size());
  std::unordered_set<std::int64_t> ids;
  for (std::size_t i = 0; i < wide.size(); ++i) {
    const auto& w = wide[i];
    if (!ids.insert(w.id).second) throw DataError(where(i, w.id) + ": duplicate id");
    if (!std::isfinite(w.rf) || !std::isfinite(w.os) || w.rf < 0.0 || w.os < 0.0) {
      throw DataError(where(i, w.id) + ": times must be finite and nonnegative");
    }
    if ((w.rfi != 0 && w.rfi != 1) || (w.osi != 0 && w.osi != 1)) {
      throw DataError(where(i, w.id) + ": event indicators must be 0 or 1");
    }
    if (w.rf > w.os) throw DataError(where(i, w.id) + ": rf > os");

    const bool relapsed = w.rfi == 1;
    const double exit_state1 = relapsed ? w.rf : w.os;
    if (!(w.rf > 0.0)) {
      throw DataError(where(i, w.id) + ": zero-length time in the initial state");
    }
    if (relapsed && w.rf == w.os) {
      throw DataError(where(i, w.id) +
                      ": relapse and death/censoring at the same time give a zero-length "
                      "ill -> dead interval");
    }
    rows.push_back({w.id, 0.0, w.rf, 1, 2, relapsed ? 1 : 0, to_ill, 0.0, w.covariates});
    rows.push_back({w.id, 0.0, exit_state1, 1, 3, relapsed ? 0 : w.osi, to_dead, 0.0,
                    w.covariates});
    if (relapsed) {
      rows.push_back({w.id, w.rf, w.os, 2, 3, w.osi, ill_to_dead, w.rf, w.covariates});
    }
  }
  return rows;
}

void validate_long(std::span<const LongRecord> rows, const ModelSpec& model) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string at = "long row " + std::to_string(i + 1) + " (id " + std::to_string(row.id) + ")";
    if (!std::isfinite(row.start) || !std::isfinite(row.stop) || row.start < 0.0) {
      throw DataError(at + ": times must be finite and nonnegative");
    }
    if (!(row.stop > row.start)) throw DataError(at + ": stop must exceed start");
    if (row.status != 0 && row.status != 1) throw DataError(at + ": status must be 0 or 1");
    if (row.trans < 1 || row.trans > static_cast<int>(model.n_transitions())) {
      throw DataError(at + ": unknown transition " + std::to_string(row.trans));
    }
    const auto& t = model.transition(row.trans);
    if (row.from != t.from_state() || row.to != t.to_state()) {
      throw DataError(at + ": from/to do not match transition " + std::to_string(row.trans));
    }
    if (row.covariates.size() != model.covariate_names().size()) {
      throw DataError(at + ": expected " + std::to_string(model.covariate_names().size()) +
                      " covariates");
    }
    if (row.entry_time && (*row.entry_time < 0.0 || *row.entry_time > row.start)) {
      throw DataError(at + ": entry time must lie in [0, start]");
    }
  }
}

}  // namespace msmt
