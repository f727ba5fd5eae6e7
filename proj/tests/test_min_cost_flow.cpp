#include <doctest.h>

#include <random>
#include <sstream>

#include "finematch/min_cost_flow.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace finematch;

TEST_SUITE("min_cost_flow") {
  TEST_CASE("single edge") {
    FlowNetwork net;
    net.add_node();
    net.add_node();
    net.supply = {1, -1};
    net.add_edge(0, 1, 1, 7);
    const auto result = solve(net);
    REQUIRE(result.has_value());
    CHECK(result->flow == std::vector<std::int64_t>{1});
    CHECK(result->total_cost == 7);
    CHECK(verify_flow(net, *result));
  }

  TEST_CASE("zero supply gives zero flow") {
    FlowNetwork net;
    for (int i = 0; i < 4; ++i) net.add_node();
    net.add_edge(0, 1, 3, 2);
    net.add_edge(1, 2, 3, 2);
    net.add_edge(2, 3, 3, 2);
    const auto result = solve(net);
    REQUIRE(result.has_value());
    CHECK(result->total_cost == 0);
    for (const auto f : result->flow) CHECK(f == 0);
  }

  TEST_CASE("3x3 transportation instance equals exhaustive enumeration") {
    FlowNetwork net;
    for (int i = 0; i < 6; ++i) net.add_node();
    net.supply = {2, 1, 3, -2, -2, -2};
    const std::int64_t grid[3][3] = {{4, 1, 9}, {6, 5, 3}, {8, 2, 7}};
    for (int s = 0; s < 3; ++s) {
      for (int t = 0; t < 3; ++t) {
        net.add_edge(s, 3 + t, 3, grid[s][t]);
      }
    }
    const auto result = solve(net);
    REQUIRE(result.has_value());
    const auto oracle = oracles::brute_force_min_cost(net);
    REQUIRE(oracle.has_value());
    CHECK(result->total_cost == *oracle);
    CHECK(verify_flow(net, *result));
    CHECK_FALSE(residual_has_negative_cycle(net, *result));
  }

  TEST_CASE("infeasible when demand exceeds reachable capacity") {
    FlowNetwork net;
    net.add_node();
    net.add_node();
    net.supply = {2, -2};
    net.add_edge(0, 1, 1, 1);
    CHECK_FALSE(solve(net).has_value());
  }

  TEST_CASE("verify_flow rejects corrupted assignments") {
    FlowNetwork net;
    for (int i = 0; i < 3; ++i) net.add_node();
    net.supply = {1, 0, -1};
    net.add_edge(0, 1, 2, 1);
    net.add_edge(1, 2, 2, 1);
    auto result = solve(net);
    REQUIRE(result.has_value());
    CHECK(verify_flow(net, *result));

    auto over_capacity = *result;
    over_capacity.flow[0] = 3;
    CHECK_FALSE(verify_flow(net, over_capacity));

    auto broken_conservation = *result;
    broken_conservation.flow[1] = 0;
    CHECK_FALSE(verify_flow(net, broken_conservation));
  }

  TEST_CASE("validate rejects malformed networks") {
    FlowNetwork net;
    net.add_node();
    net.add_node();
    net.supply = {1, -2};
    CHECK_THROWS_AS(net.validate(), std::invalid_argument);
    net.supply = {1, -1};
    net.add_edge(0, 1, -1, 0);
    CHECK_THROWS_AS(net.validate(), std::invalid_argument);
    net.edges[0].capacity = 1;
    net.edges[0].cost = -2;
    CHECK_THROWS_AS(net.validate(), std::invalid_argument);
  }

  TEST_CASE("random instances agree with the enumeration oracle") {
    std::mt19937_64 engine(2024);
    int solved = 0;
    for (int trial = 0; trial < 300; ++trial) {
      const FlowNetwork net = fixtures::random_small_network(engine);
      const auto result = solve(net);
      const auto oracle = oracles::brute_force_min_cost(net);
      REQUIRE(result.has_value() == oracle.has_value());
      if (result) {
        ++solved;
        CHECK(result->total_cost == *oracle);
        CHECK(verify_flow(net, *result));
        CHECK_FALSE(residual_has_negative_cycle(net, *result));
        CHECK(reduced_costs_nonnegative(net, *result));
      }
    }
    CHECK(solved > 50);  // the generator must actually produce feasible cases
  }

  TEST_CASE("deterministic across repeated solves") {
    std::mt19937_64 engine(77);
    for (int trial = 0; trial < 20; ++trial) {
      const FlowNetwork net = fixtures::random_small_network(engine);
      const auto first = solve(net);
      const auto second = solve(net);
      REQUIRE(first.has_value() == second.has_value());
      if (first) {
        CHECK(first->flow == second->flow);
        CHECK(first->total_cost == second->total_cost);
        CHECK(first->node_potential == second->node_potential);
      }
    }
  }

  TEST_CASE("dimacs dump") {
    FlowNetwork net;
    net.add_node();
    net.add_node();
    net.supply = {1, -1};
    net.add_edge(0, 1, 2, 5);
    std::ostringstream out;
    write_dimacs(net, out);
    CHECK(out.str() == "p min 2 1\nn 1 1\nn 2 -1\na 1 2 0 2 5\n");
  }
}
