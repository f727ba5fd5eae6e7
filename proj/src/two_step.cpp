#include "finematch/two_step.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace finematch {

namespace {

std::string interval_label(int k, int k_cap) {
  if (k <= 1) return "(0,2)";
  if (k >= k_cap) return "[" + std::to_string(k_cap) + ",inf)";
  return "[" + std::to_string(k) + "," + std::to_string(k + 1) + ")";
}

// Entire number in (0,2) maps to k=1, [k,k+1) to k, [k_cap,inf) to k_cap.
int stratum_of(double entire, int k_cap) {
  if (entire < 2.0) return 1;
  const int k = static_cast<int>(std::floor(entire));
  return std::min(k, k_cap);
}

std::string failing_levels(const FeasibilityReport& report) {
  std::ostringstream out;
  for (const auto& check : report.checks) {
    if (!check.passed) {
      if (!out.str().empty()) out << "; ";
      out << check.name;
      if (!check.detail.empty()) out << " (" << check.detail << ")";
    }
  }
  return out.str();
}

}  // namespace

std::vector<Stratum> stratify(const Cohort& cohort, const PropensityModel& model, int k_cap,
                              int min_size) {
  if (k_cap < 1) throw std::invalid_argument("stratify: k_cap must be >= 1");
  if (min_size < 0) throw std::invalid_argument("stratify: min_size must be >= 0");

  std::vector<std::vector<int>> members(k_cap + 1);
  for (int i = 0; i < static_cast<int>(cohort.units().size()); ++i) {
    const double entire = entire_number(model, cohort, i);
    members[stratum_of(entire, k_cap)].push_back(i);
  }

  // Merge small strata downward, cascading; the lowest is never merged away.
  std::vector<std::vector<std::string>> merged_from(k_cap + 1);
  for (int k = k_cap; k >= 2; --k) {
    if (static_cast<int>(members[k].size()) < min_size) {
      if (!members[k].empty()) {
        members[k - 1].insert(members[k - 1].end(), members[k].begin(), members[k].end());
        merged_from[k - 1].push_back(interval_label(k, k_cap));
        merged_from[k - 1].insert(merged_from[k - 1].end(), merged_from[k].begin(),
                                  merged_from[k].end());
        merged_from[k].clear();
        members[k].clear();
      }
    }
  }

  std::vector<Stratum> strata;
  for (int k = 1; k <= k_cap; ++k) {
    if (members[k].empty()) continue;
    Stratum stratum;
    stratum.attempted_k = k;
    stratum.interval_label = interval_label(k, k_cap);
    stratum.unit_indices = std::move(members[k]);
    stratum.merged_from = std::move(merged_from[k]);
    strata.push_back(std::move(stratum));
  }
  return strata;
}

std::optional<MatchResult> fixed_ratio_fb_match(const Cohort& cohort, int k,
                                                const std::vector<std::string>& covariates,
                                                std::int64_t cost_scale, DistanceMetric metric) {
  if (k < 1) throw std::invalid_argument("fixed_ratio_fb_match: k must be >= 1");
  if (cohort.treated_count() == 0) {
    throw std::invalid_argument("fixed_ratio_fb_match: no treated units");
  }
  MatchConfig config;
  config.min_controls = k;
  config.max_controls = k;
  config.kappa = Ratio(k, 1);
  config.cost_scale = cost_scale;
  return one_shot_match(cohort, covariates, config, metric);
}

TwoStepResult two_step_match(const Cohort& cohort,
                             const std::vector<std::string>& match_covariates,
                             const std::vector<std::string>& propensity_covariates, int k_cap,
                             int min_size, std::int64_t cost_scale, DistanceMetric metric) {
  const PropensityModel model = fit_propensity(cohort, propensity_covariates);
  const std::vector<Stratum> strata = stratify(cohort, model, k_cap, min_size);

  TwoStepResult result;
  result.pooled.config.min_controls = 1;
  result.pooled.config.max_controls = k_cap;
  result.pooled.config.cost_scale = cost_scale;
  result.pooled.kappa_used = Ratio(0, 1);  // no single kappa for a pooled design
  result.pooled.matched_per_level.assign(cohort.level_count(), 0);
  result.pooled.quota_per_level.assign(cohort.level_count(), 0);

  for (const Stratum& stratum : strata) {
    const Cohort sub = cohort.subcohort(stratum.unit_indices);

    StratumLog log;
    log.interval_label = stratum.interval_label;
    log.n_treated = sub.treated_count();
    log.n_controls = sub.control_count();
    log.attempted_k = stratum.attempted_k;
    log.merged_from = stratum.merged_from;

    if (sub.treated_count() == 0) {
      // Controls with no treated counterpart are all discarded.
      for (int i : sub.control_indices()) {
        result.pooled.discarded_controls.push_back(sub.units()[i].id);
      }
      result.strata.push_back(std::move(log));
      continue;
    }

    std::optional<MatchResult> matched;
    for (int k = stratum.attempted_k; k >= 1 && !matched; --k) {
      MatchConfig config;
      config.min_controls = k;
      config.max_controls = k;
      config.kappa = Ratio(k, 1);
      config.cost_scale = cost_scale;
      const FeasibilityReport feasibility = check_feasibility(sub, config);

      StratumAttempt attempt;
      attempt.k = k;
      attempt.feasible = feasibility.feasible;
      if (!feasibility.feasible) attempt.failure_detail = failing_levels(feasibility);
      log.attempts.push_back(std::move(attempt));

      if (feasibility.feasible) {
        matched = fixed_ratio_fb_match(sub, k, match_covariates, cost_scale, metric);
        if (!matched) log.attempts.back().feasible = false;  // solver-level infeasibility
        if (matched) log.achieved_k = k;
      }
    }

    if (matched) {
      if (*log.achieved_k < log.attempted_k) result.downgrade_count += 1;
      result.pooled.sets.insert(result.pooled.sets.end(), matched->sets.begin(),
                                matched->sets.end());
      result.pooled.discarded_controls.insert(result.pooled.discarded_controls.end(),
                                              matched->discarded_controls.begin(),
                                              matched->discarded_controls.end());
      result.pooled.total_distance += matched->total_distance;
      // Map the stratum's per-level matched counts back to parent levels.
      for (int b = 0; b < sub.level_count(); ++b) {
        const auto& label = sub.level_labels()[b];
        for (int pb = 0; pb < cohort.level_count(); ++pb) {
          if (cohort.level_labels()[pb] == label) {
            result.pooled.matched_per_level[pb] += matched->matched_per_level[b];
            break;
          }
        }
      }
    } else {
      // Even a pair match failed: treated units go unmatched (flagged), all
      // stratum controls are discarded.
      for (int i : sub.treated_indices()) {
        result.unmatched_treated.push_back(sub.units()[i].id);
      }
      for (int i : sub.control_indices()) {
        result.pooled.discarded_controls.push_back(sub.units()[i].id);
      }
    }
    result.strata.push_back(std::move(log));
  }

  std::sort(result.pooled.sets.begin(), result.pooled.sets.end(),
            [](const MatchedSet& a, const MatchedSet& b) { return a.treated_id < b.treated_id; });
  std::sort(result.pooled.discarded_controls.begin(), result.pooled.discarded_controls.end());
  std::sort(result.unmatched_treated.begin(), result.unmatched_treated.end());
  return result;
}

}  // namespace finematch
