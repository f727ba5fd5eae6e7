#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "finematch/cohort.hpp"
#include "finematch/distances.hpp"
#include "finematch/min_cost_flow.hpp"

namespace finematch {

struct MatchedSet {
  std::string treated_id;
  std::vector<std::string> control_ids;  // sorted by id
};

/// A variable-ratio matched design: one set per treated unit with between L
/// and U controls, plus the controls left unmatched. Matched controls at each
/// fine-balance level number exactly floor(kappa * n_b).
struct MatchResult {
  std::vector<MatchedSet> sets;  // ordered by treated id
  std::vector<std::string> discarded_controls;
  double total_distance = 0.0;  // total_cost / cost_scale
  Ratio kappa_used{1, 1};
  MatchConfig config;
  std::vector<std::int64_t> matched_per_level;  // controls matched at each level
  std::vector<std::int64_t> quota_per_level;    // floor(kappa * n_b)

  std::int64_t matched_control_count() const;
};

/// Node/edge bookkeeping for reading a solved flow back into a match.
struct NetworkIndex {
  std::int32_t source = 0;
  std::int32_t sink = 0;
  std::int32_t overflow = 0;
  std::int32_t first_treated = 0;   // T consecutive nodes, id-sorted order
  std::int32_t first_control = 0;   // C consecutive nodes, id-sorted order
  std::int32_t first_auxiliary = 0; // sum(M_b) consecutive nodes
  std::int64_t treated_count = 0;
  std::int64_t control_count = 0;
  std::int64_t auxiliary_count = 0;
  std::int32_t tau_gamma_edge_base = 0;  // edge (t,c) = base + t*C + c
  std::int32_t aux_gamma_edge_base = 0;
  std::int64_t aux_gamma_edge_count = 0;
};

struct BuiltNetwork {
  FlowNetwork network;
  NetworkIndex index;
  MatchConfig config;
  std::vector<std::int64_t> quotas;          // M_b
  std::vector<std::int64_t> quota_matched;   // floor(kappa * n_b)
  std::int64_t overflow_demand = 0;          // U*T + sum(M_b) - C
};

struct FeasibilityCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct FeasibilityReport {
  bool feasible = false;
  std::vector<FeasibilityCheck> checks;
  double kappa = 0.0;
  double kappa_ceiling = 0.0;          // kappa_max when defined
  std::int64_t matched_controls = 0;   // sum_b floor(kappa * n_b)
  std::int64_t overflow_demand = 0;

  std::string to_string() const;
};

/// Pre-flight diagnostics: per-level control sufficiency at the requested
/// kappa, the kappa range itself, and whether sum_b floor(kappa*n_b) fits in
/// [L*T, U*T].
FeasibilityReport check_feasibility(const Cohort& cohort, const MatchConfig& config);

/// Builds the variable-ratio fine-balance flow network:
///   Source -> tau_t            (cap U,   cost 0)
///   Source -> a_bk             (cap 1,   cost 0)
///   tau_t  -> gamma_c          (cap 1,   cost round(cost_scale * delta_tc))
///   a_bk   -> gamma_c@level b  (cap 1,   cost 0)
///   tau_t  -> Overflow         (cap U-L, cost 0)
///   gamma_c -> Sink            (cap 1,   cost 0)
/// Supplies: Source +U*T+sum(M_b); Sink -C; Overflow -(U*T+sum(M_b)-C).
/// Auxiliary edges exist only toward same-level controls; a forbidden pairing
/// is an absent edge rather than an infinite cost.
BuiltNetwork build_network(const Cohort& cohort, const DistanceMatrix& distances,
                           const MatchConfig& config);

/// Reads a solved flow back into matched sets and discarded controls, and
/// validates the structural invariants (throws std::logic_error on violation).
MatchResult extract_match(const Cohort& cohort, const BuiltNetwork& built,
                          const FlowAssignment& assignment);

/// End-to-end pipeline on a caller-provided distance matrix. Returns
/// std::nullopt exactly when no variable-ratio match with fine balance exists
/// for this configuration.
std::optional<MatchResult> one_shot_match(const Cohort& cohort, const DistanceMatrix& distances,
                                          const MatchConfig& config);

/// Same, computing the distance matrix internally on a covariate subset
/// (empty = all covariates).
std::optional<MatchResult> one_shot_match(const Cohort& cohort,
                                          const std::vector<std::string>& covariates,
                                          const MatchConfig& config,
                                          DistanceMetric metric = DistanceMetric::mahalanobis);

}  // namespace finematch
