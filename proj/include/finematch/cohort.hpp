#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "finematch/ratio.hpp"

namespace finematch {

/// One study subject. `fb_level` is the dense 1..B index of the nominal
/// fine-balance covariate within the owning cohort.
struct Unit {
  std::string id;
  bool treated = false;
  std::vector<double> covariates;  // aligned with Cohort::covariate_names()
  int fb_level = 0;
};

/// One raw input row, before level re-indexing and validation.
struct RawRecord {
  std::string id;
  bool treated = false;
  std::vector<double> covariates;
  std::string fb_label;
};

/// Matching knobs: each treated unit receives between `min_controls` (L) and
/// `max_controls` (U) controls; `kappa` is the target control-to-treated ratio
/// per fine-balance level; costs are scaled to integers by `cost_scale`.
struct MatchConfig {
  int min_controls = 1;
  int max_controls = 1;
  Ratio kappa{1, 1};
  std::int64_t cost_scale = 100000;

  void validate() const;  // throws std::invalid_argument
};

/// Immutable study population with per-level treated/control counts.
/// Treated and control index lists are sorted by unit id, which fixes the
/// ordering used everywhere downstream (distance rows, network nodes).
class Cohort {
 public:
  Cohort() = default;

  /// Permissive constructor: computes counts and re-indexes levels densely,
  /// but does not require N_b >= n_b (stratum sub-cohorts may violate it).
  static Cohort from_units(std::vector<Unit> units,
                           std::vector<std::string> covariate_names,
                           std::vector<std::string> level_labels);

  const std::vector<Unit>& units() const { return units_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const std::vector<std::string>& level_labels() const { return level_labels_; }

  int level_count() const { return static_cast<int>(level_labels_.size()); }  // B
  std::int64_t treated_count() const { return static_cast<std::int64_t>(treated_indices_.size()); }
  std::int64_t control_count() const { return static_cast<std::int64_t>(control_indices_.size()); }

  const std::vector<std::int64_t>& treated_per_level() const { return treated_per_level_; }  // n_b
  const std::vector<std::int64_t>& control_per_level() const { return control_per_level_; }  // N_b

  /// Indices into units(), sorted by unit id.
  const std::vector<int>& treated_indices() const { return treated_indices_; }
  const std::vector<int>& control_indices() const { return control_indices_; }

  std::optional<int> covariate_index(const std::string& name) const;
  std::vector<int> covariate_indices(const std::vector<std::string>& names) const;  // throws on unknown

  /// Sub-population restricted to the given unit indices. Levels are
  /// re-indexed densely; labels are preserved.
  Cohort subcohort(const std::vector<int>& unit_indices) const;

 private:
  std::vector<Unit> units_;
  std::vector<std::string> covariate_names_;
  std::vector<std::string> level_labels_;
  std::vector<std::int64_t> treated_per_level_;
  std::vector<std::int64_t> control_per_level_;
  std::vector<int> treated_indices_;
  std::vector<int> control_indices_;
};

/// Validated ingestion: distinct ids, consistent covariate vectors, levels
/// re-indexed densely 1..B in sorted label order. Throws std::invalid_argument
/// when a level seen among treated units has no controls at all (fine balance
/// would be impossible at any kappa >= 1).
Cohort build_cohort(const std::vector<RawRecord>& records,
                    const std::vector<std::string>& covariate_names);

/// min_b N_b / n_b over levels with n_b > 0, as an exact rational.
/// Throws if some level has N_b < n_b or there are no treated units.
Ratio kappa_max(const Cohort& cohort);

/// Per-level discard quotas M_b = N_b - floor(kappa * n_b).
/// Requires 1 <= kappa <= kappa_max(cohort).
std::vector<std::int64_t> discard_quotas(const Cohort& cohort, const Ratio& kappa);

}  // namespace finematch
