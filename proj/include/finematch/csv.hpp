#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "finematch/cohort.hpp"
#include "finematch/match_network.hpp"

namespace finematch {

/// Parsed CSV: header plus rows of string cells. Handles quoted fields and
/// CRLF endings.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

struct CohortCsvOptions {
  std::string fb_column;                    // required
  std::vector<std::string> covariates;      // empty = autodetect numeric columns
  std::vector<std::string> exclude;         // dropped from autodetection
};

struct LoadedCohort {
  Cohort cohort;
  std::vector<std::string> warnings;        // e.g. non-numeric columns skipped
};

/// Cohort ingestion: requires `id` and `treated` (0/1) columns plus the named
/// fine-balance column; every other numeric column becomes a covariate unless
/// excluded. Throws std::invalid_argument with the offending column/row.
LoadedCohort load_cohort_csv(const std::string& path, const CohortCsvOptions& options);

/// Matched sets as CSV with columns set_id, role (treated|control), unit_id.
void write_match_csv(const MatchResult& result, std::ostream& out);

/// Full structured record: config, kappa, totals, per-level quota table,
/// matched sets, discarded controls.
std::string match_result_json(const Cohort& cohort, const MatchResult& result);

}  // namespace finematch
