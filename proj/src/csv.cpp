#include "finematch/csv.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace finematch {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, int line_number) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  if (quoted) {
    throw std::invalid_argument("csv line " + std::to_string(line_number) + ": unterminated quote");
  }
  cells.push_back(std::move(cell));
  return cells;
}

bool parse_double(const std::string& text, double* out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, *out);
  return result.ec == std::errc{} && result.ptr == end && std::isfinite(*out);
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<int>(j);
  }
  return -1;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line_number == 1) {
      table.header = split_csv_line(line, line_number);
      continue;
    }
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line, line_number);
    if (cells.size() != table.header.size()) {
      throw std::invalid_argument("csv line " + std::to_string(line_number) + ": expected " +
                                  std::to_string(table.header.size()) + " cells, got " +
                                  std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) {
    throw std::invalid_argument("csv: missing header row");
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open input file '" + path + "'");
  return read_csv(in);
}

LoadedCohort load_cohort_csv(const std::string& path, const CohortCsvOptions& options) {
  const CsvTable table = read_csv_file(path);

  const int id_col = table.column("id");
  if (id_col < 0) throw std::invalid_argument("input is missing required column 'id'");
  const int treated_col = table.column("treated");
  if (treated_col < 0) throw std::invalid_argument("input is missing required column 'treated'");
  if (options.fb_column.empty()) {
    throw std::invalid_argument("fine-balance column name must be given");
  }
  const int fb_col = table.column(options.fb_column);
  if (fb_col < 0) {
    throw std::invalid_argument("input is missing fine-balance column '" + options.fb_column + "'");
  }

  LoadedCohort loaded;
  std::vector<int> covariate_cols;
  std::vector<std::string> covariate_names;

  if (!options.covariates.empty()) {
    for (const auto& name : options.covariates) {
      const int col = table.column(name);
      if (col < 0) throw std::invalid_argument("input is missing covariate column '" + name + "'");
      covariate_cols.push_back(col);
      covariate_names.push_back(name);
    }
  } else {
    const std::set<std::string> excluded(options.exclude.begin(), options.exclude.end());
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      const std::string& name = table.header[j];
      if (static_cast<int>(j) == id_col || static_cast<int>(j) == treated_col ||
          static_cast<int>(j) == fb_col || excluded.count(name)) {
        continue;
      }
      bool numeric = !table.rows.empty();
      for (const auto& row : table.rows) {
        double value;
        if (!parse_double(row[j], &value)) {
          numeric = false;
          break;
        }
      }
      if (numeric) {
        covariate_cols.push_back(static_cast<int>(j));
        covariate_names.push_back(name);
      } else {
        loaded.warnings.push_back("column '" + name + "' is not numeric and was ignored");
      }
    }
  }

  std::vector<RawRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    RawRecord record;
    record.id = row[id_col];
    if (row[treated_col] == "1") {
      record.treated = true;
    } else if (row[treated_col] == "0") {
      record.treated = false;
    } else {
      throw std::invalid_argument("row " + std::to_string(r + 2) + ": column 'treated' must be 0 or 1, got '" +
                                  row[treated_col] + "'");
    }
    record.fb_label = row[fb_col];
    record.covariates.reserve(covariate_cols.size());
    for (std::size_t k = 0; k < covariate_cols.size(); ++k) {
      double value;
      if (!parse_double(row[covariate_cols[k]], &value)) {
        throw std::invalid_argument("row " + std::to_string(r + 2) + ": covariate '" +
                                    covariate_names[k] + "' has non-numeric value '" +
                                    row[covariate_cols[k]] + "'");
      }
      record.covariates.push_back(value);
    }
    records.push_back(std::move(record));
  }

  loaded.cohort = build_cohort(records, covariate_names);
  return loaded;
}

void write_match_csv(const MatchResult& result, std::ostream& out) {
  out << "set_id,role,unit_id\n";
  int set_id = 0;
  for (const auto& set : result.sets) {
    ++set_id;
    out << set_id << ",treated," << set.treated_id << "\n";
    for (const auto& control : set.control_ids) {
      out << set_id << ",control," << control << "\n";
    }
  }
}

std::string match_result_json(const Cohort& cohort, const MatchResult& result) {
  nlohmann::json j;
  j["config"]["L"] = result.config.min_controls;
  j["config"]["U"] = result.config.max_controls;
  j["config"]["cost_scale"] = result.config.cost_scale;
  j["kappa"] = result.kappa_used.value();
  j["kappa_exact"] = result.kappa_used.str();
  j["n_treated"] = cohort.treated_count();
  j["n_controls_total"] = cohort.control_count();
  j["n_controls_matched"] = result.matched_control_count();
  j["n_controls_discarded"] = static_cast<std::int64_t>(result.discarded_controls.size());
  j["total_distance"] = result.total_distance;

  j["levels"] = nlohmann::json::array();
  for (int b = 0; b < cohort.level_count(); ++b) {
    nlohmann::json level;
    level["label"] = cohort.level_labels()[b];
    level["n_treated"] = cohort.treated_per_level()[b];
    level["n_controls"] = cohort.control_per_level()[b];
    if (b < static_cast<int>(result.quota_per_level.size())) {
      level["quota_matched"] = result.quota_per_level[b];
    }
    if (b < static_cast<int>(result.matched_per_level.size())) {
      level["matched"] = result.matched_per_level[b];
    }
    j["levels"].push_back(std::move(level));
  }

  j["sets"] = nlohmann::json::array();
  for (const auto& set : result.sets) {
    nlohmann::json s;
    s["treated"] = set.treated_id;
    s["controls"] = set.control_ids;
    j["sets"].push_back(std::move(s));
  }
  j["discarded_controls"] = result.discarded_controls;
  return j.dump(2);
}

}  // namespace finematch
