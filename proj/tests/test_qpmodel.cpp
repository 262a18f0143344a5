#include <doctest.h>

#include <random>

#include "iamod/errors.hpp"
#include "iamod/qpmodel.hpp"
#include "iamod/qpsolver.hpp"
#include "support/test_util.hpp"

using namespace iamod;
using iamod::testing::rand_uniform;

namespace {

Eigen::VectorXd random_primal(std::mt19937_64& rng, int n) {
  Eigen::VectorXd x(n);
  for (int j = 0; j < n; ++j) x[j] = rand_uniform(rng, 0.0, 50.0);
  return x;
}

// Node imbalance of one commodity computed straight from the arc lists,
// bypassing the assembled matrix.
Eigen::VectorXd direct_imbalance(const Scenario& s, const Eigen::VectorXd& f) {
  Eigen::VectorXd imb = Eigen::VectorXd::Zero(s.network.node_count());
  for (int a = 0; a < s.network.arc_count(); ++a) {
    const Arc& arc = s.network.arcs[static_cast<size_t>(a)];
    imb[arc.head] += f[a];
    imb[arc.tail] -= f[a];
  }
  return imb;
}

}  // namespace

TEST_SUITE("qpmodel") {

TEST_CASE("walking-only instance is forced by conservation") {
  Scenario s = iamod::testing::walking_only_scenario(60.0, 80.0, 100.0);
  auto [qp, idx] = assemble(s);
  CHECK(idx.columns() == 1);  // one arc, one request, no road block
  CHECK(qp.a_in.rows() == 0);

  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == doctest::Approx(100.0).epsilon(1e-9));

  FlowSolution flows = extract_flows(s, idx, r.x);
  const double expected = s.costs.value_of_time * 60.0 * 100.0 +
                          s.costs.regularization * 100.0 * 100.0;
  CHECK(flows.objective.total == doctest::Approx(expected).epsilon(1e-9));
  CHECK(flows.objective.amod_operating_cost == 0.0);
  CHECK(flows.objective.transit_operating_cost == 0.0);
}

TEST_CASE("equality row count follows the M|V| + |V_R| formula") {
  Scenario s = iamod::testing::corridor_scenario();
  auto [qp, idx] = assemble(s);
  const int expected = static_cast<int>(s.requests.size()) * s.network.node_count() +
                       s.network.road_node_count();
  CHECK(qp.a_eq.rows() == expected);
  CHECK(idx.columns() ==
        static_cast<int>(s.requests.size()) * s.network.arc_count() +
            s.network.road_arc_count());
}

TEST_CASE("asymmetric demand forces mirror rebalancing") {
  // All customers ride A -> B; vehicle balance forces the same rate back.
  Scenario s = iamod::testing::corridor_scenario(1e6, 80.0);
  auto [qp, idx] = assemble(s);
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  FlowSolution flows = extract_flows(s, idx, r.x);

  const int fwd = s.network.arc_road_slot[6];  // road arc 2 -> 3
  const int back = s.network.arc_road_slot[7];
  const double customer_fwd = flows.request_flows[0][6];
  CHECK(customer_fwd == doctest::Approx(80.0).epsilon(1e-6));
  CHECK(flows.rebalancing[back] == doctest::Approx(customer_fwd).epsilon(1e-6));
  CHECK(flows.rebalancing[fwd] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("assembled equality rows match the hand-computed imbalance") {
  Scenario s = iamod::testing::small_grid(17, 3, 3, 4);
  auto [qp, idx] = assemble(s);
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x = random_primal(rng, idx.columns());
    Eigen::VectorXd residual = qp.a_eq * x - qp.b_eq;

    for (int m = 0; m < idx.n_requests; ++m) {
      Eigen::VectorXd f = x.segment(idx.flow_col(m, 0), idx.n_arcs);
      Eigen::VectorXd imb = direct_imbalance(s, f);
      const Request& req = s.requests[static_cast<size_t>(m)];
      imb[req.destination] -= req.rate_per_h;
      imb[req.origin] += req.rate_per_h;
      for (int j = 0; j < idx.n_nodes; ++j) {
        CHECK(std::abs(residual[idx.balance_row(m, j)] - imb[j]) < 1e-12);
      }
    }
  }
}

TEST_CASE("matrix objective equals the direct evaluation") {
  Scenario s = iamod::testing::small_grid(23, 3, 4, 5);
  auto [qp, idx] = assemble(s);
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x = random_primal(rng, idx.columns());
    const double quad = 0.5 * x.dot(qp.q_diag.cwiseProduct(x)) + qp.c.dot(x);
    FlowSolution flows = extract_flows(s, idx, x);
    CHECK(std::abs(quad - flows.objective.total) / std::max(1.0, std::abs(quad)) < 1e-10);
  }
}

TEST_CASE("solver objective agrees with the direct evaluation at the optimum") {
  Scenario s = iamod::testing::small_grid(53, 4, 3, 5);
  auto [qp, idx] = assemble(s);
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  FlowSolution flows = extract_flows(s, idx, r.x);
  CHECK(std::abs(r.objective - flows.objective.total) /
            std::max(1.0, std::abs(r.objective)) <
        1e-8);
}

TEST_CASE("all-zero flows cost nothing") {
  Scenario s = iamod::testing::small_grid(29, 3, 3, 3);
  auto [qp, idx] = assemble(s);
  FlowSolution flows = extract_flows(s, idx, Eigen::VectorXd::Zero(idx.columns()));
  CHECK(flows.objective.total == 0.0);
}

TEST_CASE("linear cost scales with demand when nothing binds") {
  GridSpec spec;
  spec.rows = 3;
  spec.cols = 3;
  spec.n_requests = 3;
  spec.road_capacity_coeff = 1e6;       // capacities far above demand
  spec.transit_capacity_per_h = 1e9;
  Scenario s = grid_scenario(spec, 31);

  auto solve_linear_cost = [](const Scenario& sc) {
    auto [qp, idx] = assemble(sc);
    SolveResult r = solve(qp);
    REQUIRE(r.status == SolveStatus::Optimal);
    FlowSolution flows = extract_flows(sc, idx, r.x);
    return flows.objective.total - flows.objective.regularization;
  };

  const double base = solve_linear_cost(s);
  Scenario doubled = s;
  for (Request& r : doubled.requests) r.rate_per_h *= 2.0;
  const double twice = solve_linear_cost(doubled);
  CHECK(twice / base == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("pack and extract round trip") {
  Scenario s = iamod::testing::small_grid(41, 3, 3, 4);
  auto [qp, idx] = assemble(s);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd x = random_primal(rng, idx.columns());
    FlowSolution flows = extract_flows(s, idx, x);
    Eigen::VectorXd packed = pack_flows(idx, flows);
    CHECK((packed - x).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("empty demand is rejected") {
  Scenario s = iamod::testing::walking_only_scenario();
  s.requests.clear();
  CHECK_THROWS_WITH_AS(assemble(s), doctest::Contains("EmptyDemand"), Error);
}

TEST_CASE("column cap guards against runaway instances") {
  Scenario s = iamod::testing::small_grid(2, 4, 4, 8);
  AssembleOptions opts;
  opts.max_columns = 100;
  CHECK_THROWS_WITH_AS(assemble(s, opts), doctest::Contains("OverflowRisk"), Error);
}

TEST_CASE("regularization stays far below the linear cost on generator scenarios") {
  Scenario s = iamod::testing::small_grid(67, 4, 4, 8);
  auto [qp, idx] = assemble(s);
  SolveResult r = solve(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  FlowSolution flows = extract_flows(s, idx, r.x);
  CHECK(flows.objective.regularization < 1e-3 * flows.objective.total);
}

}  // TEST_SUITE
