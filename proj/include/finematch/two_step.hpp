#pragma once

#include <optional>
#include <string>
#include <vector>

#include "finematch/cohort.hpp"
#include "finematch/distances.hpp"
#include "finematch/match_network.hpp"

namespace finematch {

/// One entire-number stratum: units with entire number in [k, k+1)
/// (k = 1 covers (0, 2); the top stratum is [k_cap, inf)).
struct Stratum {
  int attempted_k = 1;
  std::string interval_label;
  std::vector<int> unit_indices;            // into the parent cohort
  std::vector<std::string> merged_from;     // labels of strata folded in
};

/// Bins all units by their estimated entire number, then merges any stratum
/// with fewer than `min_size` units into the adjacent lower stratum,
/// cascading; the lowest stratum is never merged away.
std::vector<Stratum> stratify(const Cohort& cohort, const PropensityModel& model, int k_cap,
                              int min_size);

/// Optimal 1-to-k match with fine balance within one (sub)cohort: the
/// variable-ratio machinery with L = U = k and kappa = k, so the per-level
/// discard quota is N_b - k * n_b. std::nullopt when infeasible.
std::optional<MatchResult> fixed_ratio_fb_match(const Cohort& cohort, int k,
                                                const std::vector<std::string>& covariates,
                                                std::int64_t cost_scale,
                                                DistanceMetric metric = DistanceMetric::mahalanobis);

struct StratumAttempt {
  int k = 0;
  bool feasible = false;
  std::string failure_detail;  // failing levels when infeasible
};

struct StratumLog {
  std::string interval_label;
  std::int64_t n_treated = 0;
  std::int64_t n_controls = 0;
  int attempted_k = 0;
  std::optional<int> achieved_k;           // none when even k = 1 failed
  std::vector<StratumAttempt> attempts;    // in descending k order
  std::vector<std::string> merged_from;
};

struct TwoStepResult {
  MatchResult pooled;                      // global per-level quota not guaranteed
  std::vector<StratumLog> strata;
  std::vector<std::string> unmatched_treated;
  int downgrade_count = 0;                 // strata with achieved_k < attempted_k
};

/// The divide-and-conquer baseline: estimate entire numbers, stratify, run a
/// fixed-ratio fine-balance match per stratum trying k, k-1, ..., 1, and pool.
/// Distances are computed per stratum on `match_covariates`.
TwoStepResult two_step_match(const Cohort& cohort,
                             const std::vector<std::string>& match_covariates,
                             const std::vector<std::string>& propensity_covariates, int k_cap,
                             int min_size, std::int64_t cost_scale = 100000,
                             DistanceMetric metric = DistanceMetric::mahalanobis);

}  // namespace finematch
