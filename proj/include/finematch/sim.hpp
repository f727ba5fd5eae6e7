#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finematch/cohort.hpp"

namespace finematch {

/// Synthetic-study settings. Covariates V1..V5 are continuous (treated units
/// shift V1 by `mu`); V6 is the categorical fine-balance variable with
/// treated probabilities (0.07, 0.48, 0.45) and control (0.1, 0.5, 0.4).
struct SimConfig {
  int n = 3000;
  double p = 0.3;                 // P(treated)
  double mu = 0.25;               // treated mean of V1
  int replications = 200;
  std::uint64_t seed = 20240501;
  std::vector<std::string> kappa_fracs = {"1.0", "0.9", "0.8"};  // exact decimals
  int min_controls = 1;           // L
  int max_controls = 4;           // U
  int k_cap = 4;
  int min_stratum_size = 25;
  std::int64_t cost_scale = 100000;

  void validate() const;
  std::string digest() const;  // stable fingerprint used to match summaries
};

/// Parses `key = value` lines ('#' comments allowed). Unknown keys are
/// rejected with their line number.
SimConfig parse_sim_config(std::istream& in);
std::string sim_config_text(const SimConfig& config);

struct GenerationLog {
  int attempts = 1;
  std::vector<std::string> regenerated;  // reason per discarded draw
};

/// Pure function of (config.seed, replication index): one synthetic cohort.
/// Draws where some fine-balance level has more treated than control units
/// are flagged and regenerated with the next sub-seed.
Cohort generate_dataset(const SimConfig& config, int replication, GenerationLog* log = nullptr);

struct RepMetrics {
  bool failed = false;
  std::string failure;
  double smd_c1 = 0.0;       // signed, treated minus matched controls
  double tv_c6 = 0.0;        // proportion in [0, 1]
  std::int64_t n_c = 0;
  std::map<int, std::int64_t> set_sizes;  // controls per set -> count
  double seconds = 0.0;
  bool downgraded = false;   // two-step only
};

struct MetricStats {
  double mean = 0.0;
  double sd = 0.0;           // sample SD; 0 and flagged when R == 1
  bool sd_defined = true;
};

struct SimSummary {
  std::string method;
  std::string config_digest;
  int replications = 0;
  std::vector<RepMetrics> reps;  // indexed by replication
  MetricStats smd_c1, tv_c6, n_c, seconds;
  std::map<int, MetricStats> set_sizes;
  int failed_reps = 0;
};

struct SimRun {
  SimConfig config;
  std::vector<SimSummary> methods;  // OS per kappa fraction, then TS
  int reps_with_downgrade = 0;
  double total_seconds = 0.0;
};

/// Replicated comparison of the one-shot design (one run per kappa fraction)
/// against the two-step baseline. Replications run in parallel on `threads`
/// workers (0 = hardware concurrency); aggregation is a sequential reduce over
/// replication index, so results do not depend on scheduling.
SimRun run_replications(const SimConfig& config, int threads = 0);

struct ComparisonTable {
  std::vector<std::string> methods;
  // metric name -> per-method stats, in `methods` order
  std::vector<std::pair<std::string, std::vector<MetricStats>>> rows;
  // one-shot method -> fraction of replications with n_c above the two-step n_c
  std::map<std::string, double> dominance_vs_two_step;
};

/// Side-by-side comparison; throws when summaries come from different configs.
ComparisonTable compare_methods(const std::vector<SimSummary>& summaries);

/// Aligned-text table (matched-set structure and timings included). TV is
/// printed in percent in the facsimile; SimSummary itself stores proportions.
std::string render_comparison(const SimRun& run);
std::string summary_csv(const SimRun& run);

}  // namespace finematch
