#include <doctest.h>

#include "iamod/errors.hpp"
#include "iamod/metrics.hpp"
#include "support/test_util.hpp"

using namespace iamod;

namespace {

struct Pipeline {
  Scenario s;
  VariableIndex idx;
  SolveResult result;
  FlowSolution flows;
  PriceSchedule prices;
};

Pipeline run_pipeline(Scenario s) {
  auto [qp, idx] = assemble(s);
  SolveResult result = solve(qp);
  REQUIRE(result.status == SolveStatus::Optimal);
  FlowSolution flows = extract_flows(s, idx, result.x);
  PriceSchedule prices = derive_prices(result, s, idx);
  return {std::move(s), idx, std::move(result), std::move(flows), std::move(prices)};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("walking-only metrics") {
  Pipeline p = run_pipeline(iamod::testing::walking_only_scenario(60.0, 80.0, 100.0));
  ScenarioMetrics m = compute_metrics(p.s, p.flows, p.prices);
  CHECK(m.modal_share_walk == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.modal_share_road == 0.0);
  CHECK(m.modal_share_transit == 0.0);
  CHECK(m.emissions_kg_h == 0.0);
  CHECK(m.fleet_size == 0.0);
  CHECK(m.avg_travel_time_s == doctest::Approx(60.0).epsilon(1e-9));
}

TEST_CASE("monetary cost is the objective without regularization") {
  Pipeline p = run_pipeline(iamod::testing::small_grid(5, 3, 3, 4));
  ScenarioMetrics m = compute_metrics(p.s, p.flows, p.prices);
  CHECK(m.monetary_cost_usd_h ==
        doctest::Approx(p.flows.objective.total - p.flows.objective.regularization)
            .epsilon(1e-12));
  CHECK(m.regularization_usd_h == p.flows.objective.regularization);
}

TEST_CASE("two-node fleet estimate matches hand arithmetic") {
  // alpha = 100/h over a 120 s road arc each way (customers out, rebalancing
  // back): fleet = (100*120 + 100*120) / 3600.
  Scenario s;
  std::vector<Node> nodes{
      {0, Layer::Walk, {}}, {1, Layer::Walk, {}}, {2, Layer::Road, {}}, {3, Layer::Road, {}}};
  std::vector<Arc> arcs{
      {0, 1, ArcKind::Walk, 4000.0, 2000.0, {}, {}},
      {0, 2, ArcKind::Switch, 120.0, 10.0, {}, {}},
      {2, 0, ArcKind::Switch, 60.0, 10.0, {}, {}},
      {1, 3, ArcKind::Switch, 120.0, 10.0, {}, {}},
      {3, 1, ArcKind::Switch, 60.0, 10.0, {}, {}},
      {2, 3, ArcKind::Road, 120.0, 2000.0, 1e6, {}},
      {3, 2, ArcKind::Road, 120.0, 2000.0, 1e6, {}},
  };
  s.network = build_network(nodes, arcs, s.vehicle);
  s.requests = {{0, 1, 100.0}};
  Pipeline p = run_pipeline(std::move(s));
  ScenarioMetrics m = compute_metrics(p.s, p.flows, p.prices);
  CHECK(m.fleet_size == doctest::Approx(24000.0 / 3600.0).epsilon(1e-6));
}

TEST_CASE("shares close to one whenever flow moves") {
  for (std::uint64_t seed : {1ULL, 7ULL, 19ULL}) {
    Pipeline p = run_pipeline(iamod::testing::small_grid(seed, 4, 3, 6));
    ScenarioMetrics m = compute_metrics(p.s, p.flows, p.prices);
    CHECK(std::abs(m.modal_share_road + m.modal_share_walk + m.modal_share_transit - 1.0) <=
          1e-9);
  }
}

TEST_CASE("emissions are consistent with the energy cost term") {
  Pipeline p = run_pipeline(iamod::testing::small_grid(11, 4, 4, 6));
  ScenarioMetrics m = compute_metrics(p.s, p.flows, p.prices);
  // energy cost term / V_E = joules per hour; times carbon intensity = kg/h
  double energy_cost = 0.0;
  const auto& net = p.s.network;
  for (int r = 0; r < net.road_arc_count(); ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    energy_cost += p.s.costs.energy_cost * *arc.energy_j *
                   (p.flows.rebalancing[r] + p.flows.customer_flow(a));
  }
  const double expected = p.s.costs.carbon_intensity * energy_cost / p.s.costs.energy_cost;
  CHECK(m.emissions_kg_h == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("provenance mismatch is refused") {
  Pipeline a = run_pipeline(iamod::testing::small_grid(1, 3, 3, 3));
  Pipeline b = run_pipeline(iamod::testing::small_grid(2, 3, 3, 3));
  CHECK_THROWS_WITH_AS(compute_metrics(a.s, a.flows, b.prices),
                       doctest::Contains("MismatchedProvenance"), Error);
}

TEST_CASE("sweep") {
  Scenario s = iamod::testing::small_grid(83, 3, 3, 5);
  SweepOptions opts;
  opts.fractions = {1.0, 0.05, 0.0};
  opts.verify = false;  // exercised separately; keeps this case fast
  SweepTable table = sweep(s, opts);
  REQUIRE(table.rows.size() == 6);

  auto row_of = [&](double fraction, SystemVariant v) -> const SweepRow& {
    for (const SweepRow& row : table.rows) {
      if (row.fraction == fraction && row.variant == v) return row;
    }
    FAIL("row not found");
    return table.rows[0];
  };

  SUBCASE("transit option never hurts") {
    for (double fraction : opts.fractions) {
      const SweepRow& ia = row_of(fraction, SystemVariant::IAMoD);
      const SweepRow& am = row_of(fraction, SystemVariant::AMoDOnly);
      REQUIRE(ia.status == SolveStatus::Optimal);
      REQUIRE(am.status == SolveStatus::Optimal);
      CHECK(ia.objective_usd_h <= am.objective_usd_h + 1e-8 * std::abs(am.objective_usd_h));
    }
  }
  SUBCASE("zero road capacity forces the ablation onto foot") {
    const SweepRow& am = row_of(0.0, SystemVariant::AMoDOnly);
    CHECK(am.metrics.modal_share_walk == doctest::Approx(1.0).epsilon(1e-9));
    const SweepRow& ia = row_of(0.0, SystemVariant::IAMoD);
    CHECK(ia.metrics.modal_share_transit > 0.0);
  }
  SUBCASE("csv has one line per row plus header") {
    const std::string csv = sweep_to_csv(table);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  }
}

TEST_CASE("transit share grows as the road shrinks") {
  Scenario s = iamod::testing::small_grid(131, 4, 4, 6);
  SweepOptions opts;
  opts.fractions = {1.0, 0.06, 0.02, 0.0};
  opts.variants = {SystemVariant::IAMoD};
  opts.verify = false;
  SweepTable table = sweep(s, opts);
  double prev = -1.0;
  for (const SweepRow& row : table.rows) {
    REQUIRE(row.status == SolveStatus::Optimal);
    CHECK(row.metrics.modal_share_transit >= prev - 1e-9);
    prev = row.metrics.modal_share_transit;
  }
}

}  // TEST_SUITE
