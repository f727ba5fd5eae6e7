#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finematch/cohort.hpp"
#include "finematch/match_network.hpp"

namespace finematch {

/// (mean_treated - mean_control) / sd, with sd fixed at the pre-match pooled
/// standard deviation. Returns std::nullopt when sd is zero or not finite
/// (undefined, never 0).
std::optional<double> smd(std::span<const double> treated_values,
                          std::span<const double> control_values, double pooled_pre_sd);

/// sqrt((var_treated + var_control) / 2) over the full pre-match cohort.
/// std::nullopt when either group has fewer than two values.
std::optional<double> pooled_pre_sd(const Cohort& cohort, int covariate_index);

/// Half the L1 distance between the two normalized count vectors.
double tv_distance(std::span<const std::int64_t> counts_p, std::span<const std::int64_t> counts_q);
double tv_distance(std::span<const double> weights_p, std::span<const double> weights_q);

/// Histogram of matched sets keyed by number of controls (1 = pair, ...).
std::map<int, std::int64_t> set_structure(const MatchResult& result);

struct CovariateBalanceRow {
  std::string name;
  double treated_mean = 0.0;
  double treated_sd = 0.0;
  double control_mean = 0.0;  // matched controls
  double control_sd = 0.0;
  std::optional<double> smd;  // undefined when the pre-match pooled sd is 0
};

struct LevelBalanceRow {
  std::string label;
  std::int64_t treated_count = 0;
  std::int64_t matched_control_count = 0;
  double treated_percent = 0.0;
  double control_percent = 0.0;
};

struct BalanceReport {
  std::int64_t n_treated = 0;
  std::int64_t n_c_matched = 0;
  std::vector<CovariateBalanceRow> covariates;
  std::vector<LevelBalanceRow> levels;              // fine-balance variable
  std::optional<double> fb_composite_smd;           // categorical composite
  double tv_fb = 0.0;                               // treated vs matched controls
  std::map<int, std::int64_t> set_sizes;            // controls per set -> count
  std::string categorical_smd_convention;
};

/// Full covariate-balance table for a matched design: per-covariate SMDs
/// against the pre-match pooled sd, per-level counts of the fine-balance
/// variable, TV distance, matched-set structure. Pure function of its inputs.
///
/// The composite SMD for the fine-balance variable follows the standard
/// multinomial convention: d' S^-1 d over level-proportion differences with
/// S built from the averaged proportions.
BalanceReport balance_report(const Cohort& cohort, const MatchResult& result,
                             const std::vector<std::string>& covariates);

std::string balance_report_text(const BalanceReport& report);
std::string balance_report_json(const BalanceReport& report);

}  // namespace finematch
