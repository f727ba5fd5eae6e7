#include "finematch/min_cost_flow.hpp"

#include <algorithm>
#include <cassert>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <vector>

namespace finematch {

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
constexpr std::int32_t kInf32 = std::numeric_limits<std::int32_t>::max();

// Residual graph in CSR form. Each arc occupies one slot; `twin` links the
// forward and reverse slot of the same edge. Slots within a node's block
// appear in global edge insertion order, which fixes the scan order.
// Per-slot values are 32-bit to keep the Dijkstra scan memory-lean; validate()
// enforces the matching per-edge range limits. Distances, potentials and the
// total cost use the full 64-bit range.
struct Residual {
  std::int32_t nodes = 0;
  std::vector<std::int32_t> start;   // size nodes+1
  std::vector<std::int32_t> to;      // per slot
  std::vector<std::int32_t> twin;    // per slot
  std::vector<std::int32_t> res;     // per slot
  std::vector<std::int32_t> cost;    // per slot (negated on reverse slots)
  std::vector<std::int32_t> fwd_slot;  // per original edge

  void build(std::int32_t node_count, const std::vector<FlowEdge>& edges) {
    nodes = node_count;
    const std::size_t slots = edges.size() * 2;
    start.assign(nodes + 1, 0);
    to.resize(slots);
    twin.resize(slots);
    res.resize(slots);
    cost.resize(slots);
    fwd_slot.resize(edges.size());

    for (const auto& e : edges) {
      ++start[e.from + 1];
      ++start[e.to + 1];
    }
    for (std::int32_t v = 0; v < nodes; ++v) start[v + 1] += start[v];

    std::vector<std::int32_t> cursor(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const FlowEdge& e = edges[i];
      const std::int32_t f = cursor[e.from]++;
      const std::int32_t r = cursor[e.to]++;
      fwd_slot[i] = f;
      to[f] = e.to;
      to[r] = e.from;
      twin[f] = r;
      twin[r] = f;
      res[f] = static_cast<std::int32_t>(e.capacity);
      res[r] = 0;
      cost[f] = static_cast<std::int32_t>(e.cost);
      cost[r] = static_cast<std::int32_t>(-e.cost);
    }
  }
};

// Blocking flow over zero-cost residual arcs (Dinic). Any flow it routes has
// total cost zero, hence is minimum-cost for its value.
class ZeroCostPass {
 public:
  ZeroCostPass(Residual& g, std::int32_t source, std::int32_t target)
      : g_(g), source_(source), target_(target) {}

  std::int64_t run() {
    std::int64_t pushed = 0;
    while (bfs()) {
      it_.assign(g_.start.begin(), g_.start.end() - 1);
      while (std::int32_t f = dfs(source_, kInf32)) pushed += f;
    }
    return pushed;
  }

 private:
  bool bfs() {
    level_.assign(g_.nodes, -1);
    std::queue<std::int32_t> queue;
    level_[source_] = 0;
    queue.push(source_);
    while (!queue.empty()) {
      const std::int32_t u = queue.front();
      queue.pop();
      for (std::int32_t s = g_.start[u]; s < g_.start[u + 1]; ++s) {
        if (g_.res[s] == 0 || g_.cost[s] != 0) continue;
        const std::int32_t v = g_.to[s];
        if (level_[v] >= 0) continue;
        level_[v] = level_[u] + 1;
        queue.push(v);
      }
    }
    return level_[target_] >= 0;
  }

  std::int32_t dfs(std::int32_t u, std::int32_t limit) {
    if (u == target_) return limit;
    for (std::int32_t& s = it_[u]; s < g_.start[u + 1]; ++s) {
      if (g_.res[s] == 0 || g_.cost[s] != 0) continue;
      const std::int32_t v = g_.to[s];
      if (level_[v] != level_[u] + 1) continue;
      const std::int32_t f = dfs(v, std::min(limit, g_.res[s]));
      if (f > 0) {
        g_.res[s] -= f;
        g_.res[g_.twin[s]] += f;
        return f;
      }
    }
    level_[u] = -1;
    return 0;
  }

  Residual& g_;
  std::int32_t source_;
  std::int32_t target_;
  std::vector<std::int32_t> level_;
  std::vector<std::int32_t> it_;
};

}  // namespace

std::int32_t FlowNetwork::add_node() {
  supply.push_back(0);
  return node_count++;
}

std::int32_t FlowNetwork::add_edge(std::int32_t from, std::int32_t to, std::int64_t capacity,
                                   std::int64_t cost) {
  edges.push_back(FlowEdge{from, to, capacity, cost});
  return static_cast<std::int32_t>(edges.size()) - 1;
}

void FlowNetwork::validate() const {
  if (node_count < 0) throw std::invalid_argument("FlowNetwork: negative node count");
  if (supply.size() != static_cast<std::size_t>(node_count)) {
    throw std::invalid_argument("FlowNetwork: supply vector length must equal node_count");
  }
  std::int64_t total = 0;
  for (std::int64_t s : supply) total += s;
  if (total != 0) throw std::invalid_argument("FlowNetwork: supplies must sum to zero");
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= node_count || e.to < 0 || e.to >= node_count) {
      throw std::invalid_argument("FlowNetwork: edge endpoint out of range");
    }
    if (e.from == e.to) throw std::invalid_argument("FlowNetwork: self-loop edge");
    if (e.capacity < 0) throw std::invalid_argument("FlowNetwork: negative capacity");
    if (e.cost < 0) throw std::invalid_argument("FlowNetwork: negative cost");
    if (e.capacity > std::numeric_limits<std::int32_t>::max() ||
        e.cost > std::numeric_limits<std::int32_t>::max()) {
      throw std::invalid_argument("FlowNetwork: per-edge capacity and cost must fit in 32 bits");
    }
  }
  for (std::int64_t s : supply) {
    if (std::abs(s) > std::numeric_limits<std::int32_t>::max()) {
      throw std::invalid_argument("FlowNetwork: per-node supply must fit in 32 bits");
    }
  }
}

std::optional<FlowAssignment> solve(const FlowNetwork& network) {
  network.validate();

  const std::int32_t n = network.node_count + 2;
  const std::int32_t super_source = network.node_count;
  const std::int32_t super_target = network.node_count + 1;

  // Supplies and demands become edges of a single-source, single-target
  // instance so the augmentation loop has one excess node to drain.
  std::vector<FlowEdge> edges = network.edges;
  std::int64_t total_supply = 0;
  for (std::int32_t v = 0; v < network.node_count; ++v) {
    const std::int64_t s = network.supply[v];
    if (s > 0) {
      edges.push_back(FlowEdge{super_source, v, s, 0});
      total_supply += s;
    } else if (s < 0) {
      edges.push_back(FlowEdge{v, super_target, -s, 0});
    }
  }

  Residual g;
  g.build(n, edges);

  std::int64_t pushed = ZeroCostPass(g, super_source, super_target).run();

  std::vector<std::int64_t> pi(n, 0);
  std::vector<std::int64_t> dist(n);
  std::vector<std::int32_t> parent(n);

  using HeapEntry = std::pair<std::int64_t, std::int32_t>;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap;

  bool first_run = true;
  while (pushed < total_supply) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    dist[super_source] = 0;
    heap = {};
    heap.emplace(0, super_source);

    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d != dist[u]) continue;  // stale entry
      if (u == super_target && !first_run) break;
      for (std::int32_t s = g.start[u]; s < g.start[u + 1]; ++s) {
        if (g.res[s] == 0) continue;
        const std::int32_t v = g.to[s];
        const std::int64_t reduced = g.cost[s] + pi[u] - pi[v];
        assert(reduced >= 0);
        const std::int64_t nd = d + reduced;
        if (nd < dist[v]) {
          dist[v] = nd;
          parent[v] = s;
          heap.emplace(nd, v);
        }
      }
    }
    first_run = false;

    if (dist[super_target] >= kInf) return std::nullopt;

    const std::int64_t d_target = dist[super_target];
    for (std::int32_t v = 0; v < n; ++v) pi[v] += std::min(dist[v], d_target);

    std::int32_t bottleneck = kInf32;
    for (std::int32_t v = super_target; v != super_source; v = g.to[g.twin[parent[v]]]) {
      bottleneck = std::min(bottleneck, g.res[parent[v]]);
    }
    for (std::int32_t v = super_target; v != super_source; v = g.to[g.twin[parent[v]]]) {
      g.res[parent[v]] -= bottleneck;
      g.res[g.twin[parent[v]]] += bottleneck;
    }
    pushed += bottleneck;
  }

  FlowAssignment assignment;
  assignment.flow.resize(network.edges.size());
  assignment.total_cost = 0;
  for (std::size_t i = 0; i < network.edges.size(); ++i) {
    const std::int64_t f = network.edges[i].capacity - g.res[g.fwd_slot[i]];
    assignment.flow[i] = f;
    assignment.total_cost += f * network.edges[i].cost;
  }
  assignment.node_potential.assign(pi.begin(), pi.begin() + network.node_count);
  return assignment;
}

bool verify_flow(const FlowNetwork& network, const FlowAssignment& assignment) {
  if (assignment.flow.size() != network.edges.size()) return false;
  std::vector<std::int64_t> balance(network.node_count, 0);
  for (std::size_t i = 0; i < network.edges.size(); ++i) {
    const std::int64_t f = assignment.flow[i];
    if (f < 0 || f > network.edges[i].capacity) return false;
    balance[network.edges[i].from] -= f;
    balance[network.edges[i].to] += f;
  }
  for (std::int32_t v = 0; v < network.node_count; ++v) {
    // inflow + supply == outflow  <=>  balance + supply == 0
    if (balance[v] + network.supply[v] != 0) return false;
  }
  return true;
}

bool residual_has_negative_cycle(const FlowNetwork& network, const FlowAssignment& assignment) {
  struct Arc {
    std::int32_t from, to;
    std::int64_t cost;
  };
  std::vector<Arc> arcs;
  arcs.reserve(network.edges.size() * 2);
  for (std::size_t i = 0; i < network.edges.size(); ++i) {
    const FlowEdge& e = network.edges[i];
    const std::int64_t f = assignment.flow[i];
    if (f < e.capacity) arcs.push_back(Arc{e.from, e.to, e.cost});
    if (f > 0) arcs.push_back(Arc{e.to, e.from, -e.cost});
  }
  std::vector<std::int64_t> dist(network.node_count, 0);
  for (std::int32_t round = 0; round < network.node_count; ++round) {
    bool improved = false;
    for (const Arc& a : arcs) {
      if (dist[a.from] + a.cost < dist[a.to]) {
        dist[a.to] = dist[a.from] + a.cost;
        improved = true;
      }
    }
    if (!improved) return false;
  }
  return true;
}

bool reduced_costs_nonnegative(const FlowNetwork& network, const FlowAssignment& assignment) {
  if (assignment.node_potential.size() != static_cast<std::size_t>(network.node_count)) return false;
  const auto& pi = assignment.node_potential;
  for (std::size_t i = 0; i < network.edges.size(); ++i) {
    const FlowEdge& e = network.edges[i];
    const std::int64_t f = assignment.flow[i];
    if (f < e.capacity && e.cost + pi[e.from] - pi[e.to] < 0) return false;
    if (f > 0 && -e.cost + pi[e.to] - pi[e.from] < 0) return false;
  }
  return true;
}

void write_dimacs(const FlowNetwork& network, std::ostream& out) {
  out << "p min " << network.node_count << " " << network.edges.size() << "\n";
  for (std::int32_t v = 0; v < network.node_count; ++v) {
    if (network.supply[v] != 0) {
      out << "n " << (v + 1) << " " << network.supply[v] << "\n";
    }
  }
  for (const auto& e : network.edges) {
    out << "a " << (e.from + 1) << " " << (e.to + 1) << " 0 " << e.capacity << " " << e.cost
        << "\n";
  }
}

}  // namespace finematch
