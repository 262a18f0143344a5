#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "iamod/scenario.hpp"

namespace iamod {

using SpMat = Eigen::SparseMatrix<double>;

/// Bijection between QP columns/rows and model entities. Columns are
/// per-request arc flows followed by the rebalancing block over road arcs;
/// equality rows are per-request node balances followed by per-road-node
/// vehicle balances; inequality rows are road capacities then transit
/// capacities.
struct VariableIndex {
  int n_requests = 0;
  int n_nodes = 0;
  int n_arcs = 0;
  int n_road_arcs = 0;
  int n_transit_arcs = 0;

  int columns() const { return n_requests * n_arcs + n_road_arcs; }
  int equality_rows() const { return n_requests * n_nodes + road_node_rows; }
  int inequality_rows() const { return n_road_arcs + n_transit_arcs; }

  int road_node_rows = 0;  // = |V_R|

  int flow_col(int request, int arc) const { return request * n_arcs + arc; }
  int reba_col(int road_slot) const { return n_requests * n_arcs + road_slot; }

  bool is_reba_col(int col) const { return col >= n_requests * n_arcs; }
  int col_request(int col) const { return col / n_arcs; }
  int col_arc(int col) const { return col % n_arcs; }
  int col_road_slot(int col) const { return col - n_requests * n_arcs; }

  int balance_row(int request, int node) const { return request * n_nodes + node; }
  int vehicle_row(int road_node_slot) const { return n_requests * n_nodes + road_node_slot; }
  int road_cap_row(int road_slot) const { return road_slot; }
  int transit_cap_row(int transit_slot) const { return n_road_arcs + transit_slot; }
};

/// Sparse convex QP: minimize 1/2 x'diag(q)x + c'x subject to
/// a_eq x = b_eq, a_in x <= b_in and x >= 0 on columns not marked free.
struct QuadraticProgram {
  Eigen::VectorXd q_diag;
  Eigen::VectorXd c;
  SpMat a_eq;
  Eigen::VectorXd b_eq;
  SpMat a_in;
  Eigen::VectorXd b_in;
  std::vector<std::uint8_t> is_free;  // empty means all columns bounded below by 0

  int columns() const { return static_cast<int>(c.size()); }
  bool column_free(int j) const { return !is_free.empty() && is_free[static_cast<size_t>(j)]; }
};

struct ObjectiveBreakdown {
  double total = 0.0;               // USD per hour
  double time_cost = 0.0;
  double amod_operating_cost = 0.0;
  double transit_operating_cost = 0.0;
  double regularization = 0.0;
};

/// Primal solution mapped back to flows, plus the four-term cost split.
struct FlowSolution {
  std::vector<Eigen::VectorXd> request_flows;  // per request, length |A|
  Eigen::VectorXd rebalancing;                 // length |A_R|, road-slot order
  ObjectiveBreakdown objective;
  std::uint64_t provenance = 0;  // ties flows to the solve chain they came from

  /// Total customer flow on arc `arc` across requests.
  double customer_flow(int arc) const;
};

struct AssembleOptions {
  std::int64_t max_columns = 2'000'000;
};

/// Builds the social-optimum QP over per-request commodity flows and the
/// rebalancing flow. Throws EmptyDemand when the scenario has no requests and
/// OverflowRisk when the column count exceeds the configured cap.
std::pair<QuadraticProgram, VariableIndex> assemble(const Scenario& s,
                                                    const AssembleOptions& opts = {});

/// Evaluates the social cost directly from flows, independently of the QP
/// matrices. Throws DimensionMismatch on shape errors.
ObjectiveBreakdown objective_direct(const Scenario& s, const FlowSolution& flows);

/// Maps a primal vector back to flows; the decomposition is computed via
/// objective_direct.
FlowSolution extract_flows(const Scenario& s, const VariableIndex& idx,
                           const Eigen::VectorXd& x);

/// Packs flows into a primal vector (inverse of extract_flows).
Eigen::VectorXd pack_flows(const VariableIndex& idx, const FlowSolution& flows);

/// Writes the QP in a sparse triplet text format for external verification.
std::string qp_debug_dump(const QuadraticProgram& qp);

}  // namespace iamod
