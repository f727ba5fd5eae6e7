#include "finematch/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace finematch {

void MatchConfig::validate() const {
  if (min_controls < 1) {
    throw std::invalid_argument("MatchConfig: min_controls (L) must be >= 1");
  }
  if (max_controls < min_controls) {
    throw std::invalid_argument("MatchConfig: max_controls (U) must be >= min_controls (L)");
  }
  if (kappa < Ratio(1, 1)) {
    throw std::invalid_argument("MatchConfig: kappa must be >= 1");
  }
  if (cost_scale <= 0) {
    throw std::invalid_argument("MatchConfig: cost_scale must be positive");
  }
}

Cohort Cohort::from_units(std::vector<Unit> units,
                          std::vector<std::string> covariate_names,
                          std::vector<std::string> level_labels) {
  Cohort cohort;
  cohort.units_ = std::move(units);
  cohort.covariate_names_ = std::move(covariate_names);
  cohort.level_labels_ = std::move(level_labels);

  const int levels = cohort.level_count();
  cohort.treated_per_level_.assign(levels, 0);
  cohort.control_per_level_.assign(levels, 0);

  for (int i = 0; i < static_cast<int>(cohort.units_.size()); ++i) {
    const Unit& unit = cohort.units_[i];
    if (unit.fb_level < 1 || unit.fb_level > levels) {
      throw std::invalid_argument("Cohort: unit '" + unit.id + "' has fb_level out of 1..B");
    }
    if (unit.covariates.size() != cohort.covariate_names_.size()) {
      throw std::invalid_argument("Cohort: unit '" + unit.id + "' covariate vector length mismatch");
    }
    if (unit.treated) {
      cohort.treated_per_level_[unit.fb_level - 1] += 1;
      cohort.treated_indices_.push_back(i);
    } else {
      cohort.control_per_level_[unit.fb_level - 1] += 1;
      cohort.control_indices_.push_back(i);
    }
  }

  auto by_id = [&](int a, int b) { return cohort.units_[a].id < cohort.units_[b].id; };
  std::sort(cohort.treated_indices_.begin(), cohort.treated_indices_.end(), by_id);
  std::sort(cohort.control_indices_.begin(), cohort.control_indices_.end(), by_id);
  return cohort;
}

std::optional<int> Cohort::covariate_index(const std::string& name) const {
  for (int j = 0; j < static_cast<int>(covariate_names_.size()); ++j) {
    if (covariate_names_[j] == name) return j;
  }
  return std::nullopt;
}

std::vector<int> Cohort::covariate_indices(const std::vector<std::string>& names) const {
  std::vector<int> indices;
  indices.reserve(names.size());
  for (const auto& name : names) {
    const auto idx = covariate_index(name);
    if (!idx) throw std::invalid_argument("Cohort: unknown covariate '" + name + "'");
    indices.push_back(*idx);
  }
  return indices;
}

Cohort Cohort::subcohort(const std::vector<int>& unit_indices) const {
  std::set<std::string> labels_seen;
  for (int i : unit_indices) {
    if (i < 0 || i >= static_cast<int>(units_.size())) {
      throw std::invalid_argument("Cohort::subcohort: unit index out of range");
    }
    labels_seen.insert(level_labels_[units_[i].fb_level - 1]);
  }
  std::vector<std::string> labels(labels_seen.begin(), labels_seen.end());
  std::map<std::string, int> label_to_level;
  for (int b = 0; b < static_cast<int>(labels.size()); ++b) {
    label_to_level[labels[b]] = b + 1;
  }
  std::vector<Unit> subset;
  subset.reserve(unit_indices.size());
  for (int i : unit_indices) {
    Unit unit = units_[i];
    unit.fb_level = label_to_level.at(level_labels_[units_[i].fb_level - 1]);
    subset.push_back(std::move(unit));
  }
  return from_units(std::move(subset), covariate_names_, std::move(labels));
}

Cohort build_cohort(const std::vector<RawRecord>& records,
                    const std::vector<std::string>& covariate_names) {
  std::set<std::string> ids;
  std::set<std::string> labels_seen;
  for (const auto& record : records) {
    if (record.id.empty()) {
      throw std::invalid_argument("build_cohort: empty unit id");
    }
    if (!ids.insert(record.id).second) {
      throw std::invalid_argument("build_cohort: duplicate unit id '" + record.id + "'");
    }
    if (record.covariates.size() != covariate_names.size()) {
      throw std::invalid_argument("build_cohort: unit '" + record.id +
                                  "' is missing covariates (expected " +
                                  std::to_string(covariate_names.size()) + ", got " +
                                  std::to_string(record.covariates.size()) + ")");
    }
    for (double value : record.covariates) {
      if (!std::isfinite(value)) {
        throw std::invalid_argument("build_cohort: unit '" + record.id +
                                    "' has a non-finite covariate");
      }
    }
    if (record.fb_label.empty()) {
      throw std::invalid_argument("build_cohort: unit '" + record.id + "' has empty fine-balance label");
    }
    labels_seen.insert(record.fb_label);
  }

  // Dense levels 1..B in sorted label order.
  std::vector<std::string> labels(labels_seen.begin(), labels_seen.end());
  std::map<std::string, int> label_to_level;
  for (int b = 0; b < static_cast<int>(labels.size()); ++b) {
    label_to_level[labels[b]] = b + 1;
  }

  std::vector<Unit> units;
  units.reserve(records.size());
  for (const auto& record : records) {
    Unit unit;
    unit.id = record.id;
    unit.treated = record.treated;
    unit.covariates = record.covariates;
    unit.fb_level = label_to_level.at(record.fb_label);
    units.push_back(std::move(unit));
  }

  Cohort cohort = Cohort::from_units(std::move(units), covariate_names, std::move(labels));
  for (int b = 0; b < cohort.level_count(); ++b) {
    if (cohort.treated_per_level()[b] > 0 && cohort.control_per_level()[b] == 0) {
      throw std::invalid_argument("build_cohort: level '" + cohort.level_labels()[b] +
                                  "' has treated units but no controls; fine balance is impossible");
    }
  }
  return cohort;
}

Ratio kappa_max(const Cohort& cohort) {
  bool found = false;
  Ratio best;
  for (int b = 0; b < cohort.level_count(); ++b) {
    const std::int64_t n_b = cohort.treated_per_level()[b];
    const std::int64_t cap_b = cohort.control_per_level()[b];
    if (n_b == 0) continue;  // levels without treated units do not constrain kappa
    if (cap_b < n_b) {
      throw std::invalid_argument("kappa_max: level '" + cohort.level_labels()[b] + "' has N_b=" +
                                  std::to_string(cap_b) + " < n_b=" + std::to_string(n_b));
    }
    const Ratio ratio(cap_b, n_b);
    if (!found || ratio < best) {
      best = ratio;
      found = true;
    }
  }
  if (!found) {
    throw std::invalid_argument("kappa_max: cohort has no treated units");
  }
  return best;
}

std::vector<std::int64_t> discard_quotas(const Cohort& cohort, const Ratio& kappa) {
  if (kappa < Ratio(1, 1)) {
    throw std::invalid_argument("discard_quotas: kappa must be >= 1");
  }
  if (kappa_max(cohort) < kappa) {
    throw std::invalid_argument("discard_quotas: kappa " + kappa.str() + " exceeds kappa_max " +
                                kappa_max(cohort).str());
  }
  std::vector<std::int64_t> quotas(cohort.level_count(), 0);
  for (int b = 0; b < cohort.level_count(); ++b) {
    const std::int64_t matched = kappa.floor_times(cohort.treated_per_level()[b]);
    quotas[b] = cohort.control_per_level()[b] - matched;
  }
  return quotas;
}

}  // namespace finematch
