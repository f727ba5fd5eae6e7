#pragma once

// Shared test cohorts. The large fixture mirrors the published insurance-type
// margins of the right-heart-catheterization (RHC) under-65 cohort: 1194
// treated and 1804 control patients over six insurance levels. Units fall in
// four clinical clusters (baseline / sepsis / trauma / coma) whose
// treated-to-control ratios place them in the four entire-number strata used
// by the two-step baseline, so the stratified design is fully reproducible.

#include <cmath>
#include <iomanip>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "finematch/cohort.hpp"
#include "finematch/distances.hpp"
#include "finematch/min_cost_flow.hpp"

namespace fixtures {

inline const std::vector<std::string> kInsuranceLevels = {
    "Medicaid",  "Medicare", "Medicare & Medicaid", "No insurance", "Private",
    "Private & Medicare"};

// Panel counts, indexed [level]: treated / control per cluster.
struct ClusterSpec {
  const char* name;
  double flags[3];  // sepsis, trauma, coma
  std::int64_t treated[6];
  std::int64_t control[6];
};

inline const ClusterSpec kClusters[4] = {
    // baseline: entire number 1371/1005 ~ 1.36 -> stratum (0,2)
    {"base", {0, 0, 0}, {129, 90, 47, 88, 596, 55}, {280, 121, 68, 115, 707, 80}},
    // sepsis: 385/176 = 2.1875 -> stratum [2,3)
    {"sepsis", {1, 0, 0}, {50, 17, 8, 24, 70, 7}, {141, 46, 18, 38, 127, 15}},
    // trauma: 27/8 = 3.375 -> stratum [3,4)
    {"trauma", {0, 1, 0}, {0, 0, 0, 0, 8, 0}, {0, 0, 0, 0, 27, 0}},
    // coma: 21/5 = 4.2 -> stratum [4,inf)
    {"coma", {0, 0, 1}, {3, 0, 0, 1, 1, 0}, {8, 0, 0, 5, 8, 0}},
};

inline const std::vector<std::string> kRhcCovariates = {"age",    "edu",    "dasi", "resp_rate",
                                                        "sepsis", "trauma", "coma"};
inline const std::vector<std::string> kRhcMatchCovariates = {"age", "edu", "dasi", "resp_rate"};
inline const std::vector<std::string> kRhcPropensityCovariates = {"sepsis", "trauma", "coma"};

inline std::vector<finematch::RawRecord> rhc_records() {
  std::mt19937_64 engine(424242);
  const auto uniform = [&] { return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53; };
  const auto normal = [&] {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };

  std::vector<finematch::RawRecord> records;
  records.reserve(2998);
  int serial = 0;
  for (const ClusterSpec& cluster : kClusters) {
    for (int level = 0; level < 6; ++level) {
      for (int arm = 0; arm < 2; ++arm) {
        const bool treated = arm == 0;
        const std::int64_t count = treated ? cluster.treated[level] : cluster.control[level];
        for (std::int64_t i = 0; i < count; ++i) {
          finematch::RawRecord record;
          std::ostringstream id;
          id << "p" << std::setw(4) << std::setfill('0') << serial++;
          record.id = id.str();
          record.treated = treated;
          record.fb_label = kInsuranceLevels[level];
          const double shift = treated ? 0.3 : 0.0;
          record.covariates = {
              50.0 + 8.0 * normal() + 2.0 * shift,  // age
              12.0 + 2.5 * normal() + 0.3 * shift,  // edu
              21.0 + 5.5 * normal() - 0.5 * shift,  // dasi
              28.0 + 13.0 * normal() - shift,       // resp_rate
              cluster.flags[0],
              cluster.flags[1],
              cluster.flags[2],
          };
          records.push_back(std::move(record));
        }
      }
    }
  }
  return records;
}

inline finematch::Cohort rhc_cohort() {
  return finematch::build_cohort(rhc_records(), kRhcCovariates);
}

// Sub-population matching Table 1 Panel B: patients with entire number in
// [2,3). In the fixture this is exactly the sepsis cluster.
inline finematch::Cohort rhc_panel_b_cohort() {
  const auto records = rhc_records();
  std::vector<finematch::RawRecord> subset;
  for (const auto& record : records) {
    if (record.covariates[4] == 1.0) subset.push_back(record);
  }
  return finematch::build_cohort(subset, kRhcCovariates);
}

// Small cohort helper: per-level treated/control counts with a single noise
// covariate drawn deterministically from `seed`.
inline finematch::Cohort counts_cohort(const std::vector<std::int64_t>& treated,
                                       const std::vector<std::int64_t>& control,
                                       std::uint64_t seed = 7) {
  std::mt19937_64 engine(seed);
  const auto uniform = [&] { return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53; };
  std::vector<finematch::RawRecord> records;
  int serial = 0;
  for (std::size_t level = 0; level < treated.size(); ++level) {
    for (int arm = 0; arm < 2; ++arm) {
      const std::int64_t count = arm == 0 ? treated[level] : control[level];
      for (std::int64_t i = 0; i < count; ++i) {
        finematch::RawRecord record;
        std::ostringstream id;
        id << "u" << std::setw(4) << std::setfill('0') << serial++;
        record.id = id.str();
        record.treated = arm == 0;
        record.fb_label = "L" + std::to_string(level + 1);
        record.covariates = {uniform()};
        records.push_back(std::move(record));
      }
    }
  }
  return finematch::build_cohort(records, {"x"});
}

// Random small matching instance for property tests and the optimality oracle.
struct SmallInstance {
  finematch::Cohort cohort;
  finematch::DistanceMatrix distances;
  finematch::MatchConfig config;
};

inline SmallInstance random_small_instance(std::mt19937_64& engine) {
  const auto uniform = [&] { return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53; };
  const auto pick = [&](int lo, int hi) {
    return lo + static_cast<int>(engine() % static_cast<std::uint64_t>(hi - lo + 1));
  };

  for (;;) {
    const int treated = pick(1, 3);
    const int controls = pick(treated, 6);
    const int levels = pick(1, 2);

    std::vector<std::int64_t> n_b(levels, 0), cap_b(levels, 0);
    for (int i = 0; i < treated; ++i) n_b[pick(0, levels - 1)] += 1;
    for (int i = 0; i < controls; ++i) cap_b[pick(0, levels - 1)] += 1;
    bool ok = true;
    for (int b = 0; b < levels; ++b) {
      if (n_b[b] > 0 && cap_b[b] < n_b[b]) ok = false;
    }
    if (!ok) continue;

    SmallInstance instance;
    instance.cohort = counts_cohort(n_b, cap_b, engine());

    const finematch::Ratio ceiling = finematch::kappa_max(instance.cohort);
    // kappa uniform over {1, ..., kappa_max} expressed as exact fractions.
    const int denom = pick(1, 4);
    finematch::Ratio kappa(pick(denom, 4 * denom), denom);
    if (ceiling < kappa) kappa = ceiling;
    if (kappa < finematch::Ratio(1, 1)) kappa = finematch::Ratio(1, 1);

    instance.config.min_controls = 1;
    instance.config.max_controls = pick(1, 3);
    instance.config.kappa = kappa;
    instance.config.cost_scale = 1;  // tests supply integer distances directly

    std::int64_t matched = 0;
    for (int b = 0; b < levels; ++b) matched += kappa.floor_times(n_b[b]);
    if (matched < treated || matched > static_cast<std::int64_t>(instance.config.max_controls) * treated) {
      continue;
    }

    instance.distances.rows = treated;
    instance.distances.cols = controls;
    instance.distances.metric = finematch::DistanceMetric::custom;
    instance.distances.values.resize(static_cast<std::size_t>(treated) * controls);
    for (auto& value : instance.distances.values) {
      value = static_cast<double>(pick(0, 20));  // integer costs, exact under scale 1
    }
    (void)uniform;
    return instance;
  }
}

// Random flow network with small caps for solver/oracle cross-checks.
inline finematch::FlowNetwork random_small_network(std::mt19937_64& engine) {
  const auto pick = [&](int lo, int hi) {
    return lo + static_cast<int>(engine() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  finematch::FlowNetwork net;
  const int nodes = pick(2, 8);
  for (int i = 0; i < nodes; ++i) net.add_node();
  const int edges = pick(1, 9);
  for (int e = 0; e < edges; ++e) {
    const int from = pick(0, nodes - 1);
    int to = pick(0, nodes - 1);
    if (to == from) to = (to + 1) % nodes;
    net.add_edge(from, to, pick(0, 3), pick(0, 9));
  }
  // Balanced supplies on a few nodes, bounded by total edge capacity.
  const int pairs = pick(0, 2);
  for (int i = 0; i < pairs; ++i) {
    const int source = pick(0, nodes - 1);
    int sink = pick(0, nodes - 1);
    if (sink == source) sink = (sink + 1) % nodes;
    const int amount = pick(1, 3);
    net.supply[source] += amount;
    net.supply[sink] -= amount;
  }
  return net;
}

}  // namespace fixtures
