#include <doctest.h>

#include "iamod/errors.hpp"
#include "iamod/netgraph.hpp"
#include "iamod/pricing.hpp"
#include "support/test_util.hpp"

using namespace iamod;

namespace {

// Corridor with an asymmetric road pair: the forward arc saturates at
// `cap_fwd`, the return arc stays slack so its congestion dual is pinned to
// zero by complementary slackness.
Scenario saturated_corridor(double cap_fwd, double cap_back, double rate) {
  Scenario s;
  s.label = "saturated-corridor";
  std::vector<Node> nodes{
      {0, Layer::Walk, {}}, {1, Layer::Walk, {}}, {2, Layer::Road, {}}, {3, Layer::Road, {}}};
  std::vector<Arc> arcs{
      {0, 1, ArcKind::Walk, 2000.0, 2000.0, {}, {}},
      {0, 2, ArcKind::Switch, 120.0, 10.0, {}, {}},
      {2, 0, ArcKind::Switch, 60.0, 10.0, {}, {}},
      {1, 3, ArcKind::Switch, 120.0, 10.0, {}, {}},
      {3, 1, ArcKind::Switch, 60.0, 10.0, {}, {}},
      {2, 3, ArcKind::Road, 144.0, 2000.0, cap_fwd, {}},
      {3, 2, ArcKind::Road, 144.0, 2000.0, cap_back, {}},
  };
  s.network = build_network(nodes, arcs, s.vehicle);
  s.requests = {{0, 1, rate}};
  return s;
}

struct Solved {
  Scenario s;
  VariableIndex idx;
  SolveResult result;
  FlowSolution flows;
  PriceSchedule prices;
};

Solved solve_and_price(Scenario s) {
  auto [qp, idx] = assemble(s);
  SolveResult result = solve(qp);
  REQUIRE(result.status == SolveStatus::Optimal);
  FlowSolution flows = extract_flows(s, idx, result.x);
  PriceSchedule prices = derive_prices(result, s, idx);
  return {std::move(s), idx, std::move(result), std::move(flows), std::move(prices)};
}

}  // namespace

TEST_SUITE("pricing") {

TEST_CASE("uncongested network prices at pure operating cost") {
  Solved sol = solve_and_price(iamod::testing::small_grid(71, 3, 3, 4));
  for (int r = 0; r < sol.s.network.road_arc_count(); ++r) {
    CHECK(sol.prices.road_tolls[r] <= 1e-6);
  }
  for (int t = 0; t < sol.s.network.transit_arc_count(); ++t) {
    const Arc& arc =
        sol.s.network.arcs[static_cast<size_t>(sol.s.network.transit_arcs[static_cast<size_t>(t)])];
    CHECK(sol.prices.transit_fares[t] ==
          doctest::Approx(sol.s.costs.transit_distance_cost * arc.distance_m).epsilon(1e-6));
  }
}

TEST_CASE("asymmetric demand separates the destination charges") {
  Solved sol = solve_and_price(iamod::testing::corridor_scenario(1e6, 80.0));
  REQUIRE(sol.prices.destination_charges.size() == 2);
  // Rebalancing from B back to A costs money; dropping off where vehicles are
  // scarce must price differently from where they pile up.
  CHECK(std::abs(sol.prices.destination_charges[0] - sol.prices.destination_charges[1]) > 1e-4);
  for (int i = 0; i < 2; ++i) {
    CHECK(sol.prices.origin_charges[i] + sol.prices.destination_charges[i] == 0.0);
  }
}

TEST_CASE("saturated arc toll matches the hand-solved KKT value") {
  const double alpha = 100.0, cap = 40.0;
  Solved sol = solve_and_price(saturated_corridor(cap, 1e5, alpha));
  const Scenario& s = sol.s;

  // flows: forward road carries exactly cap, the rest walks
  const int fwd_arc = 5, back_arc = 6;
  const int fwd = s.network.arc_road_slot[fwd_arc];
  const int back = s.network.arc_road_slot[back_arc];
  CHECK(sol.flows.request_flows[0][fwd_arc] == doctest::Approx(cap).epsilon(1e-7));
  CHECK(sol.flows.request_flows[0][0] == doctest::Approx(alpha - cap).epsilon(1e-7));
  CHECK(sol.flows.rebalancing[back] == doctest::Approx(cap).epsilon(1e-7));

  // Oracle derived by eliminating the potentials from the stationarity system
  // (walk arc + switch-road-switch path + return rebalancing arc):
  //   toll = V_T (t_walk - t_path) + 2 V_Q (alpha - cap)
  //          - 2 (V_DR d + V_E e) - 8 V_Q cap
  const Arc& road = s.network.arcs[fwd_arc];
  const double op = s.costs.amod_distance_cost * road.distance_m +
                    s.costs.energy_cost * *road.energy_j;
  const double vt = s.costs.value_of_time;
  const double vq = s.costs.regularization;
  const double oracle = vt * (2000.0 - (120.0 + 144.0 + 60.0)) + 2.0 * vq * (alpha - cap) -
                        2.0 * op - 8.0 * vq * cap;
  CHECK(sol.prices.road_tolls[fwd] == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(sol.prices.road_tolls[back] <= 1e-6);  // slack return arc
}

TEST_CASE("price schedule invariants hold on congested grids") {
  Scenario base = iamod::testing::small_grid(101, 4, 4, 8);
  for (double fraction : {0.05, 0.02}) {
    Solved sol = solve_and_price(scale_road_capacity(base, fraction));
    const Scenario& s = sol.s;

    SUBCASE("") {}  // keep doctest happy about subcase-free loops

    // complementary slackness transfer: slack arcs carry no toll
    for (int r = 0; r < s.network.road_arc_count(); ++r) {
      const int a = s.network.road_arcs[static_cast<size_t>(r)];
      const double usage =
          sol.flows.customer_flow(a) + sol.flows.rebalancing[r];
      if (usage < s.road_capacity(a) - 1e-6) {
        CHECK(sol.prices.road_tolls[r] <= 1e-6);
      }
      CHECK(sol.prices.road_tolls[r] >= 0.0);
    }
    // charge antisymmetry is exact
    for (int i = 0; i < s.network.road_node_count(); ++i) {
      CHECK(sol.prices.origin_charges[i] + sol.prices.destination_charges[i] == 0.0);
    }
    // arc-charge reconstruction is exact
    for (int r = 0; r < s.network.road_arc_count(); ++r) {
      const Arc& arc = s.network.arcs[static_cast<size_t>(s.network.road_arcs[static_cast<size_t>(r)])];
      const double op = s.costs.amod_distance_cost * arc.distance_m +
                        s.costs.energy_cost * *arc.energy_j;
      CHECK(sol.prices.amod_arc_charges[r] == op + sol.prices.road_tolls[r]);
    }
    // transit fare reconstruction is exact: fare - mu = V_DP d
    for (int t = 0; t < s.network.transit_arc_count(); ++t) {
      const Arc& arc =
          s.network.arcs[static_cast<size_t>(s.network.transit_arcs[static_cast<size_t>(t)])];
      const double mu = sol.prices.transit_fares[t] -
                        s.costs.transit_distance_cost * arc.distance_m;
      CHECK(mu >= -1e-9);
    }
  }
}

TEST_CASE("toll summary") {
  SUBCASE("zero tolls average to zero") {
    Solved sol = solve_and_price(iamod::testing::small_grid(31, 3, 3, 4));
    TripTollSummary summary = trip_toll_summary(sol.flows, sol.prices, sol.s);
    CHECK(summary.avg_toll_per_trip == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("single tolled arc carrying the full rate") {
    const double alpha = 100.0, cap = 40.0;
    Solved sol = solve_and_price(saturated_corridor(cap, 1e5, alpha));
    const int fwd = sol.s.network.arc_road_slot[5];
    // Only the forward arc is tolled; it carries `cap` customers per hour.
    const double expected = sol.prices.road_tolls[fwd] * cap / alpha;
    TripTollSummary summary = trip_toll_summary(sol.flows, sol.prices, sol.s);
    CHECK(summary.avg_toll_per_trip == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("grid point matches an independent recomputation") {
    Solved sol = solve_and_price(scale_road_capacity(iamod::testing::small_grid(47, 4, 4, 6), 0.03));
    TripTollSummary summary = trip_toll_summary(sol.flows, sol.prices, sol.s);
    double toll_flow = 0.0;
    for (int r = 0; r < sol.s.network.road_arc_count(); ++r) {
      const int a = sol.s.network.road_arcs[static_cast<size_t>(r)];
      toll_flow += sol.prices.road_tolls[r] * sol.flows.customer_flow(a);
    }
    CHECK(summary.avg_toll_per_trip ==
          doctest::Approx(toll_flow / sol.s.total_demand_rate()).epsilon(1e-12));
  }
  SUBCASE("mismatched provenance is refused") {
    Solved a = solve_and_price(iamod::testing::small_grid(1, 3, 3, 3));
    Solved b = solve_and_price(iamod::testing::small_grid(2, 3, 3, 3));
    CHECK_THROWS_WITH_AS(trip_toll_summary(a.flows, b.prices, a.s),
                         doctest::Contains("MismatchedProvenance"), Error);
  }
}

TEST_CASE("prices require an optimal solve") {
  Scenario s = iamod::testing::small_grid(3, 3, 3, 3);
  auto [qp, idx] = assemble(s);
  SolveResult result;
  result.status = SolveStatus::IterationLimit;
  CHECK_THROWS_WITH_AS(derive_prices(result, s, idx), doctest::Contains("NotOptimal"), Error);
}

TEST_CASE("dual stability probe") {
  SUBCASE("uncongested duals are stable") {
    Scenario s = iamod::testing::small_grid(13, 3, 3, 4);
    auto [qp, idx] = assemble(s);
    DualStabilityProbe probe = dual_stability_probe(s, qp, idx, SolverOptions{});
    CHECK(!probe.degenerate);
    CHECK(probe.max_variation < 1e-6);
  }
  SUBCASE("symmetric saturated pairs flag dual multiplicity") {
    // Forward/backward road arcs that saturate together pin only the sum of
    // their congestion duals; the probe flags the instance instead of
    // pretending the schedule is canonical.
    Scenario s = scale_road_capacity(iamod::testing::small_grid(13, 3, 3, 4), 0.05);
    auto [qp, idx] = assemble(s);
    DualStabilityProbe probe = dual_stability_probe(s, qp, idx, SolverOptions{}, 3);
    CHECK(probe.degenerate);
  }
}

TEST_CASE("price csv has both sections") {
  Solved sol = solve_and_price(iamod::testing::small_grid(7, 3, 3, 3));
  const std::string csv = prices_to_csv(sol.prices, sol.s);
  CHECK(csv.find("arc_id,kind,toll_usd,fare_usd,arc_charge_usd") != std::string::npos);
  CHECK(csv.find("node_id,origin_charge_usd,destination_charge_usd") != std::string::npos);
}

}  // TEST_SUITE
