#include "iamod/qpmodel.hpp"

#include <sstream>
#include <string_view>
#include <vector>

#include "iamod/errors.hpp"

namespace iamod {

double FlowSolution::customer_flow(int arc) const {
  double total = 0.0;
  for (const auto& f : request_flows) total += f[arc];
  return total;
}

std::pair<QuadraticProgram, VariableIndex> assemble(const Scenario& s,
                                                    const AssembleOptions& opts) {
  const LayeredNetwork& net = s.network;
  const int n_requests = static_cast<int>(s.requests.size());
  if (n_requests == 0) fail(ErrorCode::EmptyDemand, "scenario has no requests");

  VariableIndex idx;
  idx.n_requests = n_requests;
  idx.n_nodes = net.node_count();
  idx.n_arcs = net.arc_count();
  idx.n_road_arcs = net.road_arc_count();
  idx.n_transit_arcs = net.transit_arc_count();
  idx.road_node_rows = net.road_node_count();

  const std::int64_t cols64 = static_cast<std::int64_t>(n_requests) * idx.n_arcs + idx.n_road_arcs;
  if (cols64 > opts.max_columns) {
    fail(ErrorCode::OverflowRisk, "QP would have " + std::to_string(cols64) + " columns");
  }
  const int n = static_cast<int>(cols64);
  const int m_eq = idx.equality_rows();
  const int m_in = idx.inequality_rows();

  QuadraticProgram qp;
  qp.q_diag = Eigen::VectorXd::Constant(n, 2.0 * s.costs.regularization);
  qp.c = Eigen::VectorXd::Zero(n);
  qp.b_eq = Eigen::VectorXd::Zero(m_eq);
  qp.b_in = Eigen::VectorXd::Zero(m_in);

  // Linear costs: customers pay time everywhere plus the operating cost of the
  // mode they ride; rebalancing pays vehicle operating costs only.
  for (int m = 0; m < n_requests; ++m) {
    for (int a = 0; a < idx.n_arcs; ++a) {
      const Arc& arc = net.arcs[static_cast<size_t>(a)];
      double cost = s.costs.value_of_time * arc.time_s;
      if (arc.kind == ArcKind::Road) {
        cost += s.costs.amod_distance_cost * arc.distance_m + s.costs.energy_cost * *arc.energy_j;
      } else if (arc.kind == ArcKind::Transit) {
        cost += s.costs.transit_distance_cost * arc.distance_m;
      }
      qp.c[idx.flow_col(m, a)] = cost;
    }
  }
  for (int r = 0; r < idx.n_road_arcs; ++r) {
    const Arc& arc = net.arcs[static_cast<size_t>(net.road_arcs[static_cast<size_t>(r)])];
    qp.c[idx.reba_col(r)] =
        s.costs.amod_distance_cost * arc.distance_m + s.costs.energy_cost * *arc.energy_j;
  }

  std::vector<Eigen::Triplet<double>> eq;
  // Customer balance: inflow - outflow = [j = d_m] alpha - [j = o_m] alpha.
  for (int m = 0; m < n_requests; ++m) {
    const Request& req = s.requests[static_cast<size_t>(m)];
    for (int a = 0; a < idx.n_arcs; ++a) {
      const Arc& arc = net.arcs[static_cast<size_t>(a)];
      eq.emplace_back(idx.balance_row(m, arc.head), idx.flow_col(m, a), 1.0);
      eq.emplace_back(idx.balance_row(m, arc.tail), idx.flow_col(m, a), -1.0);
    }
    qp.b_eq[idx.balance_row(m, req.destination)] += req.rate_per_h;
    qp.b_eq[idx.balance_row(m, req.origin)] -= req.rate_per_h;
  }
  // Vehicle balance at every road node, over road arcs only.
  for (int r = 0; r < idx.n_road_arcs; ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    const int head_slot = net.road_node_slot[static_cast<size_t>(arc.head)];
    const int tail_slot = net.road_node_slot[static_cast<size_t>(arc.tail)];
    for (int m = 0; m < n_requests; ++m) {
      eq.emplace_back(idx.vehicle_row(head_slot), idx.flow_col(m, a), 1.0);
      eq.emplace_back(idx.vehicle_row(tail_slot), idx.flow_col(m, a), -1.0);
    }
    eq.emplace_back(idx.vehicle_row(head_slot), idx.reba_col(r), 1.0);
    eq.emplace_back(idx.vehicle_row(tail_slot), idx.reba_col(r), -1.0);
  }
  qp.a_eq.resize(m_eq, n);
  qp.a_eq.setFromTriplets(eq.begin(), eq.end());

  std::vector<Eigen::Triplet<double>> in;
  for (int r = 0; r < idx.n_road_arcs; ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    for (int m = 0; m < n_requests; ++m) {
      in.emplace_back(idx.road_cap_row(r), idx.flow_col(m, a), 1.0);
    }
    in.emplace_back(idx.road_cap_row(r), idx.reba_col(r), 1.0);
    qp.b_in[idx.road_cap_row(r)] = s.road_capacity(a);
  }
  for (int t = 0; t < idx.n_transit_arcs; ++t) {
    const int a = net.transit_arcs[static_cast<size_t>(t)];
    for (int m = 0; m < n_requests; ++m) {
      in.emplace_back(idx.transit_cap_row(t), idx.flow_col(m, a), 1.0);
    }
    qp.b_in[idx.transit_cap_row(t)] = s.transit_capacity(a);
  }
  qp.a_in.resize(m_in, n);
  qp.a_in.setFromTriplets(in.begin(), in.end());

  return {std::move(qp), idx};
}

ObjectiveBreakdown objective_direct(const Scenario& s, const FlowSolution& flows) {
  const LayeredNetwork& net = s.network;
  if (static_cast<int>(flows.request_flows.size()) != static_cast<int>(s.requests.size())) {
    fail(ErrorCode::DimensionMismatch, "flow solution has wrong request count");
  }
  for (const auto& f : flows.request_flows) {
    if (f.size() != net.arc_count()) {
      fail(ErrorCode::DimensionMismatch, "per-request flow vector has wrong arc count");
    }
  }
  if (flows.rebalancing.size() != net.road_arc_count()) {
    fail(ErrorCode::DimensionMismatch, "rebalancing vector has wrong road-arc count");
  }

  ObjectiveBreakdown b;
  for (const auto& f : flows.request_flows) {
    for (int a = 0; a < net.arc_count(); ++a) {
      const Arc& arc = net.arcs[static_cast<size_t>(a)];
      b.time_cost += s.costs.value_of_time * arc.time_s * f[a];
      b.regularization += s.costs.regularization * f[a] * f[a];
      if (arc.kind == ArcKind::Transit) {
        b.transit_operating_cost += s.costs.transit_distance_cost * arc.distance_m * f[a];
      }
    }
  }
  for (int r = 0; r < net.road_arc_count(); ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    double road_total = flows.rebalancing[r];
    for (const auto& f : flows.request_flows) road_total += f[a];
    b.amod_operating_cost +=
        (s.costs.amod_distance_cost * arc.distance_m + s.costs.energy_cost * *arc.energy_j) *
        road_total;
    b.regularization += s.costs.regularization * flows.rebalancing[r] * flows.rebalancing[r];
  }
  b.total = b.time_cost + b.amod_operating_cost + b.transit_operating_cost + b.regularization;
  return b;
}

FlowSolution extract_flows(const Scenario& s, const VariableIndex& idx,
                           const Eigen::VectorXd& x) {
  if (x.size() != idx.columns()) {
    fail(ErrorCode::DimensionMismatch, "primal vector has wrong dimension");
  }
  FlowSolution flows;
  flows.request_flows.reserve(static_cast<size_t>(idx.n_requests));
  for (int m = 0; m < idx.n_requests; ++m) {
    flows.request_flows.push_back(x.segment(idx.flow_col(m, 0), idx.n_arcs));
  }
  flows.rebalancing = x.tail(idx.n_road_arcs);
  flows.objective = objective_direct(s, flows);
  flows.provenance = content_hash(
      std::string_view(reinterpret_cast<const char*>(x.data()),
                       static_cast<size_t>(x.size()) * sizeof(double)));
  return flows;
}

Eigen::VectorXd pack_flows(const VariableIndex& idx, const FlowSolution& flows) {
  Eigen::VectorXd x(idx.columns());
  for (int m = 0; m < idx.n_requests; ++m) {
    x.segment(idx.flow_col(m, 0), idx.n_arcs) = flows.request_flows[static_cast<size_t>(m)];
  }
  x.tail(idx.n_road_arcs) = flows.rebalancing;
  return x;
}

std::string qp_debug_dump(const QuadraticProgram& qp) {
  std::ostringstream out;
  out.precision(17);
  out << "qp " << qp.columns() << " " << qp.a_eq.rows() << " " << qp.a_in.rows() << "\n";
  for (int j = 0; j < qp.columns(); ++j) {
    out << "col " << j << " q " << qp.q_diag[j] << " c " << qp.c[j]
        << (qp.column_free(j) ? " free" : " nonneg") << "\n";
  }
  auto dump_matrix = [&out](const char* tag, const SpMat& m, const Eigen::VectorXd& rhs) {
    for (int k = 0; k < m.outerSize(); ++k) {
      for (SpMat::InnerIterator it(m, k); it; ++it) {
        out << tag << " " << it.row() << " " << it.col() << " " << it.value() << "\n";
      }
    }
    for (int i = 0; i < rhs.size(); ++i) out << tag << "_rhs " << i << " " << rhs[i] << "\n";
  };
  dump_matrix("eq", qp.a_eq, qp.b_eq);
  dump_matrix("in", qp.a_in, qp.b_in);
  return out.str();
}

}  // namespace iamod
