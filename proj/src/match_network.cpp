#include "finematch/match_network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace finematch {

std::int64_t MatchResult::matched_control_count() const {
  std::int64_t total = 0;
  for (const auto& set : sets) total += static_cast<std::int64_t>(set.control_ids.size());
  return total;
}

std::string FeasibilityReport::to_string() const {
  std::ostringstream out;
  out << "feasibility: " << (feasible ? "PASS" : "FAIL") << "\n";
  for (const auto& check : checks) {
    out << "  [" << (check.passed ? "ok" : "FAIL") << "] " << check.name;
    if (!check.detail.empty()) out << ": " << check.detail;
    out << "\n";
  }
  return out.str();
}

FeasibilityReport check_feasibility(const Cohort& cohort, const MatchConfig& config) {
  config.validate();
  FeasibilityReport report;
  report.kappa = config.kappa.value();

  const std::int64_t treated = cohort.treated_count();
  const std::int64_t controls = cohort.control_count();

  {
    FeasibilityCheck check;
    check.name = "cohort has treated and control units";
    check.passed = treated > 0 && controls > 0;
    check.detail = "T=" + std::to_string(treated) + ", C=" + std::to_string(controls);
    report.checks.push_back(check);
  }

  // Per-level control sufficiency at the requested kappa: every level needs
  // N_b >= floor(kappa * n_b).
  bool levels_ok = true;
  {
    FeasibilityCheck check;
    check.name = "per-level controls cover floor(kappa * n_b)";
    std::ostringstream detail;
    for (int b = 0; b < cohort.level_count(); ++b) {
      const std::int64_t need = config.kappa.floor_times(cohort.treated_per_level()[b]);
      const std::int64_t have = cohort.control_per_level()[b];
      if (have < need) {
        if (!detail.str().empty()) detail << "; ";
        detail << "'" << cohort.level_labels()[b] << "': " << have << " < " << need;
        levels_ok = false;
      }
    }
    check.passed = levels_ok;
    check.detail = detail.str();
    report.checks.push_back(check);
  }

  // kappa within [1, kappa_max]; kappa_max is undefined when some level
  // already lacks controls, which the previous check reports.
  if (levels_ok && treated > 0) {
    const Ratio ceiling = kappa_max(cohort);
    report.kappa_ceiling = ceiling.value();
    FeasibilityCheck check;
    check.name = "kappa within [1, kappa_max]";
    check.passed = Ratio(1, 1) <= config.kappa && config.kappa <= ceiling;
    check.detail = "kappa=" + std::to_string(config.kappa.value()) +
                   ", kappa_max=" + std::to_string(ceiling.value());
    report.checks.push_back(check);
  }

  std::int64_t matched = 0;
  for (int b = 0; b < cohort.level_count(); ++b) {
    matched += config.kappa.floor_times(cohort.treated_per_level()[b]);
  }
  report.matched_controls = matched;

  {
    FeasibilityCheck check;
    check.name = "matched controls cover L per treated";
    check.passed = matched >= config.min_controls * treated;
    check.detail = "sum floor(kappa*n_b)=" + std::to_string(matched) +
                   ", L*T=" + std::to_string(config.min_controls * treated);
    report.checks.push_back(check);
  }
  {
    FeasibilityCheck check;
    check.name = "U large enough for matched controls";
    check.passed = matched <= config.max_controls * treated;
    check.detail = "sum floor(kappa*n_b)=" + std::to_string(matched) +
                   ", U*T=" + std::to_string(config.max_controls * treated);
    if (!check.passed) check.detail += " (U too small)";
    report.checks.push_back(check);
  }

  report.overflow_demand = config.max_controls * treated + (controls - matched) - controls;
  report.feasible = true;
  for (const auto& check : report.checks) report.feasible = report.feasible && check.passed;
  return report;
}

BuiltNetwork build_network(const Cohort& cohort, const DistanceMatrix& distances,
                           const MatchConfig& config) {
  config.validate();
  const std::int64_t treated = cohort.treated_count();
  const std::int64_t controls = cohort.control_count();
  if (distances.rows != treated || distances.cols != controls) {
    throw std::invalid_argument("build_network: distance matrix shape must be T x C");
  }
  for (double value : distances.values) {
    if (!std::isfinite(value) || value < 0.0) {
      throw std::invalid_argument("build_network: distances must be finite and nonnegative");
    }
  }

  const std::vector<std::int64_t> quotas = discard_quotas(cohort, config.kappa);
  const std::int64_t total_quota = std::accumulate(quotas.begin(), quotas.end(), std::int64_t{0});
  std::vector<std::int64_t> quota_matched(cohort.level_count());
  for (int b = 0; b < cohort.level_count(); ++b) {
    quota_matched[b] = cohort.control_per_level()[b] - quotas[b];
  }

  const std::int64_t supply = config.max_controls * treated + total_quota;
  const std::int64_t overflow_demand = supply - controls;
  if (overflow_demand < 0) {
    throw std::invalid_argument("build_network: U*T + sum(M_b) < C (U too small)");
  }
  const std::int64_t matched_total = controls - total_quota;
  if (matched_total < config.min_controls * treated) {
    throw std::invalid_argument(
        "build_network: sum floor(kappa*n_b) < L*T (cannot give every treated unit L controls)");
  }

  BuiltNetwork built;
  FlowNetwork& net = built.network;
  NetworkIndex& index = built.index;
  built.config = config;
  built.quotas = quotas;
  built.quota_matched = quota_matched;
  built.overflow_demand = overflow_demand;

  index.treated_count = treated;
  index.control_count = controls;
  index.auxiliary_count = total_quota;

  index.source = net.add_node();
  index.sink = net.add_node();
  index.overflow = net.add_node();
  index.first_treated = net.node_count;
  for (std::int64_t t = 0; t < treated; ++t) net.add_node();
  index.first_control = net.node_count;
  for (std::int64_t c = 0; c < controls; ++c) net.add_node();
  index.first_auxiliary = net.node_count;
  for (std::int64_t a = 0; a < total_quota; ++a) net.add_node();

  net.supply[index.source] = supply;
  net.supply[index.sink] = -controls;
  net.supply[index.overflow] = -overflow_demand;

  for (std::int64_t t = 0; t < treated; ++t) {
    net.add_edge(index.source, index.first_treated + static_cast<std::int32_t>(t),
                 config.max_controls, 0);
  }
  for (std::int64_t a = 0; a < total_quota; ++a) {
    net.add_edge(index.source, index.first_auxiliary + static_cast<std::int32_t>(a), 1, 0);
  }

  std::size_t aux_edge_count = 0;
  for (int b = 0; b < cohort.level_count(); ++b) {
    aux_edge_count += static_cast<std::size_t>(quotas[b]) * cohort.control_per_level()[b];
  }
  index.tau_gamma_edge_base = static_cast<std::int32_t>(net.edges.size());
  net.edges.reserve(net.edges.size() + static_cast<std::size_t>(treated) * controls +
                    aux_edge_count + treated + controls);
  const double scale = static_cast<double>(config.cost_scale);
  for (std::int64_t t = 0; t < treated; ++t) {
    const std::int32_t tau = index.first_treated + static_cast<std::int32_t>(t);
    for (std::int64_t c = 0; c < controls; ++c) {
      const std::int64_t cost = std::llround(scale * distances.at(static_cast<int>(t), static_cast<int>(c)));
      net.add_edge(tau, index.first_control + static_cast<std::int32_t>(c), 1, cost);
    }
  }

  // Controls grouped by level, in id-sorted order within each level.
  std::vector<std::vector<std::int32_t>> controls_at_level(cohort.level_count());
  for (std::int64_t c = 0; c < controls; ++c) {
    const Unit& unit = cohort.units()[cohort.control_indices()[c]];
    controls_at_level[unit.fb_level - 1].push_back(static_cast<std::int32_t>(c));
  }

  index.aux_gamma_edge_base = static_cast<std::int32_t>(net.edges.size());
  std::int32_t aux = index.first_auxiliary;
  for (int b = 0; b < cohort.level_count(); ++b) {
    for (std::int64_t k = 0; k < quotas[b]; ++k, ++aux) {
      for (std::int32_t c : controls_at_level[b]) {
        net.add_edge(aux, index.first_control + c, 1, 0);
      }
    }
  }
  index.aux_gamma_edge_count = static_cast<std::int64_t>(net.edges.size()) - index.aux_gamma_edge_base;

  for (std::int64_t t = 0; t < treated; ++t) {
    net.add_edge(index.first_treated + static_cast<std::int32_t>(t), index.overflow,
                 config.max_controls - config.min_controls, 0);
  }
  for (std::int64_t c = 0; c < controls; ++c) {
    net.add_edge(index.first_control + static_cast<std::int32_t>(c), index.sink, 1, 0);
  }
  return built;
}

MatchResult extract_match(const Cohort& cohort, const BuiltNetwork& built,
                          const FlowAssignment& assignment) {
  const NetworkIndex& index = built.index;
  const std::int64_t treated = index.treated_count;
  const std::int64_t controls = index.control_count;

  MatchResult result;
  result.config = built.config;
  result.kappa_used = built.config.kappa;
  result.quota_per_level = built.quota_matched;
  result.matched_per_level.assign(cohort.level_count(), 0);

  std::vector<char> control_matched(controls, 0);
  result.sets.reserve(treated);
  for (std::int64_t t = 0; t < treated; ++t) {
    MatchedSet set;
    set.treated_id = cohort.units()[cohort.treated_indices()[t]].id;
    for (std::int64_t c = 0; c < controls; ++c) {
      const std::int64_t flow =
          assignment.flow[index.tau_gamma_edge_base + t * controls + c];
      if (flow == 1) {
        set.control_ids.push_back(cohort.units()[cohort.control_indices()[c]].id);
        if (control_matched[c]) {
          throw std::logic_error("extract_match: control matched twice");
        }
        control_matched[c] = 1;
        const Unit& unit = cohort.units()[cohort.control_indices()[c]];
        result.matched_per_level[unit.fb_level - 1] += 1;
      } else if (flow != 0) {
        throw std::logic_error("extract_match: non-binary flow on a matching edge");
      }
    }
    std::sort(set.control_ids.begin(), set.control_ids.end());
    result.sets.push_back(std::move(set));
  }

  for (std::int64_t e = 0; e < index.aux_gamma_edge_count; ++e) {
    const std::int32_t edge = index.aux_gamma_edge_base + static_cast<std::int32_t>(e);
    if (assignment.flow[edge] == 1) {
      const std::int64_t c = built.network.edges[edge].to - index.first_control;
      if (control_matched[c]) {
        throw std::logic_error("extract_match: control both matched and discarded");
      }
      control_matched[c] = 1;
      result.discarded_controls.push_back(cohort.units()[cohort.control_indices()[c]].id);
    }
  }
  std::sort(result.discarded_controls.begin(), result.discarded_controls.end());

  for (std::int64_t c = 0; c < controls; ++c) {
    if (!control_matched[c]) {
      throw std::logic_error("extract_match: control neither matched nor discarded");
    }
  }
  for (const auto& set : result.sets) {
    const int size = static_cast<int>(set.control_ids.size());
    if (size < built.config.min_controls || size > built.config.max_controls) {
      throw std::logic_error("extract_match: matched set size outside [L, U]");
    }
  }
  for (int b = 0; b < cohort.level_count(); ++b) {
    if (result.matched_per_level[b] != built.quota_matched[b]) {
      throw std::logic_error("extract_match: fine-balance quota violated at level '" +
                             cohort.level_labels()[b] + "'");
    }
  }

  result.total_distance =
      static_cast<double>(assignment.total_cost) / static_cast<double>(built.config.cost_scale);
  return result;
}

std::optional<MatchResult> one_shot_match(const Cohort& cohort, const DistanceMatrix& distances,
                                          const MatchConfig& config) {
  const FeasibilityReport report = check_feasibility(cohort, config);
  if (!report.feasible) return std::nullopt;

  BuiltNetwork built = build_network(cohort, distances, config);
  const auto solved = solve(built.network);
  if (!solved) return std::nullopt;

  // extract_match validates the structural invariants; violations are bugs.
  return extract_match(cohort, built, *solved);
}

std::optional<MatchResult> one_shot_match(const Cohort& cohort,
                                          const std::vector<std::string>& covariates,
                                          const MatchConfig& config, DistanceMetric metric) {
  const FeasibilityReport report = check_feasibility(cohort, config);
  if (!report.feasible) return std::nullopt;
  const DistanceMatrix distances = distance_matrix(cohort, covariates, metric);
  return one_shot_match(cohort, distances, config);
}

}  // namespace finematch
