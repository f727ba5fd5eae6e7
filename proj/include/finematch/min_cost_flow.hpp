#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace finematch {

struct FlowEdge {
  std::int32_t from = 0;
  std::int32_t to = 0;
  std::int64_t capacity = 0;  // nonnegative integer
  std::int64_t cost = 0;      // nonnegative integer
};

/// Directed graph with node supplies (positive = source, negative = demand).
/// Supplies must sum to zero. Forbidden pairings are expressed by omitting the
/// edge, never by large costs. Per-edge capacities and costs and per-node
/// supplies must each fit in 32 bits; total cost uses the full 64-bit range.
struct FlowNetwork {
  std::int32_t node_count = 0;
  std::vector<FlowEdge> edges;
  std::vector<std::int64_t> supply;

  std::int32_t add_node();
  std::int32_t add_edge(std::int32_t from, std::int32_t to, std::int64_t capacity, std::int64_t cost);
  void validate() const;  // throws std::invalid_argument
};

/// Integral flow per edge plus the solver's dual certificate: with the
/// returned potentials, every residual edge has nonnegative reduced cost,
/// which rules out negative-cost residual cycles.
struct FlowAssignment {
  std::vector<std::int64_t> flow;
  std::int64_t total_cost = 0;
  std::vector<std::int64_t> node_potential;
};

/// Exact integral minimum-cost flow via successive shortest augmenting paths
/// with node potentials (Dijkstra inner loop on reduced costs). Zero-cost
/// residual paths are saturated by a blocking-flow pre-pass before any
/// shortest-path search. Deterministic for identical input: edges are scanned
/// in insertion order throughout.
///
/// Returns std::nullopt when no feasible flow meets all supplies and demands.
std::optional<FlowAssignment> solve(const FlowNetwork& network);

/// True iff capacities are respected and, at every node,
/// inflow + supply == outflow.
bool verify_flow(const FlowNetwork& network, const FlowAssignment& assignment);

/// Label-correcting (Bellman-Ford) scan of the residual graph.
bool residual_has_negative_cycle(const FlowNetwork& network, const FlowAssignment& assignment);

/// O(E) optimality certificate from the returned potentials.
bool reduced_costs_nonnegative(const FlowNetwork& network, const FlowAssignment& assignment);

/// DIMACS min-cost-flow text format, for cross-checking with external solvers.
void write_dimacs(const FlowNetwork& network, std::ostream& out);

}  // namespace finematch
