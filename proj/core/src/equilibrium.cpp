#include "iamod/equilibrium.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>
#include <vector>

#include "iamod/errors.hpp"

namespace iamod {

namespace {

using Vec = Eigen::VectorXd;

// Columns of the customer QP: per-arc flow, then the u/w imbalance split pair
// per road node (u - w = net road outflow).
struct CustomerLayout {
  int n_arcs = 0;
  int n_road_nodes = 0;
  int u_col(int slot) const { return n_arcs + 2 * slot; }
  int w_col(int slot) const { return n_arcs + 2 * slot + 1; }
  int columns() const { return n_arcs + 2 * n_road_nodes; }
};

QuadraticProgram build_customer_qp(const Scenario& s, const PriceSchedule& prices,
                                   const Request& req) {
  const LayeredNetwork& net = s.network;
  CustomerLayout layout{net.arc_count(), net.road_node_count()};

  for (int slot = 0; slot < layout.n_road_nodes; ++slot) {
    if (prices.origin_charges[slot] + prices.destination_charges[slot] < -1e-9) {
      fail(ErrorCode::UnboundedCustomerProblem,
           "origin + destination charge is negative at road node slot " + std::to_string(slot));
    }
  }

  QuadraticProgram qp;
  const int n = layout.columns();
  qp.q_diag = Vec::Zero(n);
  qp.c = Vec::Zero(n);

  for (int a = 0; a < net.arc_count(); ++a) {
    qp.q_diag[a] = 2.0 * s.costs.regularization;
    qp.c[a] = s.costs.value_of_time * net.arcs[static_cast<size_t>(a)].time_s;
  }
  for (int r = 0; r < net.road_arc_count(); ++r) {
    qp.c[net.road_arcs[static_cast<size_t>(r)]] += prices.amod_arc_charges[r];
  }
  for (int t = 0; t < net.transit_arc_count(); ++t) {
    qp.c[net.transit_arcs[static_cast<size_t>(t)]] += prices.transit_fares[t];
  }
  for (int slot = 0; slot < layout.n_road_nodes; ++slot) {
    qp.c[layout.u_col(slot)] = prices.origin_charges[slot];
    qp.c[layout.w_col(slot)] = prices.destination_charges[slot];
  }

  const int m_eq = net.node_count() + layout.n_road_nodes;
  qp.b_eq = Vec::Zero(m_eq);
  std::vector<Eigen::Triplet<double>> eq;
  for (int a = 0; a < net.arc_count(); ++a) {
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    eq.emplace_back(arc.head, a, 1.0);
    eq.emplace_back(arc.tail, a, -1.0);
  }
  qp.b_eq[req.destination] += req.rate_per_h;
  qp.b_eq[req.origin] -= req.rate_per_h;

  // Split rows: u - w - (road outflow - road inflow) = 0 per road node.
  for (int slot = 0; slot < layout.n_road_nodes; ++slot) {
    const int row = net.node_count() + slot;
    eq.emplace_back(row, layout.u_col(slot), 1.0);
    eq.emplace_back(row, layout.w_col(slot), -1.0);
  }
  for (int r = 0; r < net.road_arc_count(); ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    const int tail_row = net.node_count() + net.road_node_slot[static_cast<size_t>(arc.tail)];
    const int head_row = net.node_count() + net.road_node_slot[static_cast<size_t>(arc.head)];
    eq.emplace_back(tail_row, a, -1.0);
    eq.emplace_back(head_row, a, 1.0);
  }
  qp.a_eq.resize(m_eq, n);
  qp.a_eq.setFromTriplets(eq.begin(), eq.end());

  qp.a_in.resize(0, n);
  qp.b_in.resize(0);
  return qp;
}

}  // namespace

Eigen::VectorXd customer_best_response(const Scenario& s, const PriceSchedule& prices,
                                       int request, const SolverOptions& opts) {
  if (request < 0 || request >= static_cast<int>(s.requests.size())) {
    fail(ErrorCode::BadArgument, "request index out of range");
  }
  const Request& req = s.requests[static_cast<size_t>(request)];
  QuadraticProgram qp = build_customer_qp(s, prices, req);
  SolveResult result = solve(qp, opts);
  if (result.status != SolveStatus::Optimal) {
    fail(ErrorCode::NotOptimal, std::string("customer best response did not converge: ") +
                                    to_string(result.status));
  }
  return result.x.head(s.network.arc_count());
}

Eigen::VectorXd operator_best_response(const Scenario& s, const Eigen::VectorXd& road_tolls,
                                       const Eigen::VectorXd& customer_road_flow,
                                       const SolverOptions& opts) {
  const LayeredNetwork& net = s.network;
  if (road_tolls.size() != net.road_arc_count() ||
      customer_road_flow.size() != net.road_arc_count()) {
    fail(ErrorCode::DimensionMismatch, "expected one value per road arc");
  }

  const int n = net.road_arc_count();
  QuadraticProgram qp;
  qp.q_diag = Vec::Constant(n, 2.0 * s.costs.regularization);
  qp.c = Vec::Zero(n);
  for (int r = 0; r < n; ++r) {
    const Arc& arc = net.arcs[static_cast<size_t>(net.road_arcs[static_cast<size_t>(r)])];
    qp.c[r] = s.costs.amod_distance_cost * arc.distance_m + s.costs.energy_cost * *arc.energy_j +
              road_tolls[r];
  }

  // Vehicle balance with the customer-carrying flows fixed:
  // inflow(f0) - outflow(f0) = customer outflow - customer inflow.
  qp.b_eq = Vec::Zero(net.road_node_count());
  std::vector<Eigen::Triplet<double>> eq;
  for (int r = 0; r < n; ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    const int tail_slot = net.road_node_slot[static_cast<size_t>(arc.tail)];
    const int head_slot = net.road_node_slot[static_cast<size_t>(arc.head)];
    eq.emplace_back(head_slot, r, 1.0);
    eq.emplace_back(tail_slot, r, -1.0);
    qp.b_eq[tail_slot] += customer_road_flow[r];
    qp.b_eq[head_slot] -= customer_road_flow[r];
  }
  qp.a_eq.resize(net.road_node_count(), n);
  qp.a_eq.setFromTriplets(eq.begin(), eq.end());
  qp.a_in.resize(0, n);
  qp.b_in.resize(0);

  SolveResult result = solve(qp, opts);
  if (result.status == SolveStatus::Infeasible) {
    fail(ErrorCode::InfeasibleRebalancing,
         "no rebalancing flow can balance the given customer flows");
  }
  if (result.status != SolveStatus::Optimal) {
    fail(ErrorCode::NotOptimal, std::string("operator best response did not converge: ") +
                                    to_string(result.status));
  }
  return result.x;
}

EquilibriumReport verify_equilibrium(const Scenario& s, const FlowSolution& social,
                                     const SolveResult& result, const PriceSchedule& prices,
                                     const EquilibriumOptions& opts) {
  const LayeredNetwork& net = s.network;
  const int n_requests = static_cast<int>(s.requests.size());

  EquilibriumReport report;
  report.per_request.resize(static_cast<size_t>(n_requests));

  // Best responses are solved well below the comparison threshold so the
  // reported deviations measure disagreement, not best-response solve error.
  SolverOptions response_opts = opts.solver;
  response_opts.tol = std::min(opts.solver.tol, 1e-10);

  // (i) Flow agreement between best responses and the social optimum.
  {
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (int m = next.fetch_add(1); m < n_requests; m = next.fetch_add(1)) {
        if (failed.load()) return;
        try {
          const Vec best = customer_best_response(s, prices, m, response_opts);
          const Vec& soc = social.request_flows[static_cast<size_t>(m)];
          const double denom = std::max(1.0, s.requests[static_cast<size_t>(m)].rate_per_h);
          EquilibriumReport::PerRequest& row = report.per_request[static_cast<size_t>(m)];
          row.request = m;
          row.max_deviation = (best - soc).cwiseAbs().maxCoeff() / denom;
          row.l2_deviation = (best - soc).norm() / std::max(1.0, soc.norm());
        } catch (const Error& e) {
          std::lock_guard<std::mutex> guard(error_mutex);
          if (!failed.exchange(true)) first_error = e.what();
        }
      }
    };
    int n_threads = opts.parallelism > 0
                        ? opts.parallelism
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::clamp(n_threads, 1, std::max(1, n_requests));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failed.load()) {
      report.notes.push_back("best response failed: " + first_error);
      report.pass = false;
      return report;
    }
  }
  for (const auto& row : report.per_request) {
    report.max_request_deviation = std::max(report.max_request_deviation, row.max_deviation);
  }

  Vec customer_road = Vec::Zero(net.road_arc_count());
  for (int r = 0; r < net.road_arc_count(); ++r) {
    customer_road[r] = social.customer_flow(net.road_arcs[static_cast<size_t>(r)]);
  }
  const Vec reba_best =
      operator_best_response(s, prices.road_tolls, customer_road, response_opts);
  const double reba_denom = std::max(1.0, s.total_demand_rate());
  report.rebalancing_deviation =
      net.road_arc_count() ? (reba_best - social.rebalancing).cwiseAbs().maxCoeff() / reba_denom
                           : 0.0;

  // (ii) Stationarity of both selfish problems at the social optimum, using
  // the social duals. Active arcs must satisfy the equality residual; arcs at
  // the flow>=0 boundary only need the one-sided condition (the bound dual
  // absorbs the slack).
  const double stat_tol = opts.stationarity_tol > 0.0
                              ? opts.stationarity_tol
                              : std::max(10.0 * result.residuals.dual_feas, 1e-8);
  report.stationarity_tol_used = stat_tol;

  // Arcs barely above the activity threshold can still carry a bound dual of
  // up to comp_slack / flow; the stationarity expressions here omit bound
  // duals, so active arcs get exactly that complementarity allowance.
  const double vq2 = 2.0 * s.costs.regularization;
  const double comp = result.residuals.comp_slack;
  for (int m = 0; m < n_requests; ++m) {
    const Vec& f = social.request_flows[static_cast<size_t>(m)];
    const double thr = opts.activity_threshold * std::max(1.0, s.requests[static_cast<size_t>(m)].rate_per_h);
    auto lambda_c = [&](NodeId node) {
      return result.y[m * net.node_count() + node];
    };
    for (int a = 0; a < net.arc_count(); ++a) {
      const Arc& arc = net.arcs[static_cast<size_t>(a)];
      double expr = s.costs.value_of_time * arc.time_s + lambda_c(arc.head) -
                    lambda_c(arc.tail) + vq2 * f[a];
      if (arc.kind == ArcKind::Road) {
        const int slot_tail = net.road_node_slot[static_cast<size_t>(arc.tail)];
        const int slot_head = net.road_node_slot[static_cast<size_t>(arc.head)];
        expr += prices.origin_charges[slot_tail] - prices.origin_charges[slot_head] +
                prices.amod_arc_charges[net.arc_road_slot[static_cast<size_t>(a)]];
      } else if (arc.kind == ArcKind::Transit) {
        expr += prices.transit_fares[net.arc_transit_slot[static_cast<size_t>(a)]];
      }
      const double violation = f[a] > thr
                                   ? std::max(0.0, std::abs(expr) - comp / f[a])
                                   : std::max(0.0, -expr);
      report.customer_stationarity = std::max(report.customer_stationarity, violation);
    }
  }

  const double reba_thr = opts.activity_threshold * std::max(1.0, s.total_demand_rate());
  for (int r = 0; r < net.road_arc_count(); ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    const int slot_tail = net.road_node_slot[static_cast<size_t>(arc.tail)];
    const int slot_head = net.road_node_slot[static_cast<size_t>(arc.head)];
    const double lambda_r_tail = prices.destination_charges[slot_tail];
    const double lambda_r_head = prices.destination_charges[slot_head];
    double expr = s.costs.amod_distance_cost * arc.distance_m +
                  s.costs.energy_cost * *arc.energy_j + prices.road_tolls[r] + lambda_r_head -
                  lambda_r_tail + vq2 * social.rebalancing[r];
    const double violation =
        social.rebalancing[r] > reba_thr
            ? std::max(0.0, std::abs(expr) - comp / social.rebalancing[r])
            : std::max(0.0, -expr);
    report.operator_stationarity = std::max(report.operator_stationarity, violation);
  }

  report.pass = report.max_request_deviation <= opts.flow_tol &&
                report.rebalancing_deviation <= opts.flow_tol &&
                report.customer_stationarity <= stat_tol &&
                report.operator_stationarity <= stat_tol;
  return report;
}

}  // namespace iamod
