#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "iamod/qpmodel.hpp"
#include "iamod/qpsolver.hpp"

namespace iamod {

/// The socially-optimal pricing-and-tolling schedule, derived from the dual
/// variables of the flow optimum. All values are USD per traversal (arcs) or
/// USD per pickup/dropoff (road nodes).
struct PriceSchedule {
  Eigen::VectorXd transit_fares;       // per transit slot
  Eigen::VectorXd road_tolls;          // per road slot
  Eigen::VectorXd amod_arc_charges;    // per road slot
  Eigen::VectorXd origin_charges;      // per road-node slot
  Eigen::VectorXd destination_charges; // per road-node slot
  std::uint64_t provenance = 0;
};

/// Maps duals to prices:
///   transit fare    = transit operating cost + transit-capacity dual
///   road toll       = road-capacity dual
///   destination     = vehicle-balance dual, origin = its exact negation
///   amod arc charge = vehicle operating cost + road toll
/// Capacity duals are normalized to be nonnegative at this boundary (tiny
/// solver negatives are clamped to zero). Throws NotOptimal unless the solve
/// converged.
PriceSchedule derive_prices(const SolveResult& result, const Scenario& s,
                            const VariableIndex& idx);

struct TripTollSummary {
  struct PerRequest {
    double toll = 0.0;                // USD per trip
    double road_fare = 0.0;           // arc charges p_R
    double transit_fare = 0.0;        // p_P
    double origin_charge = 0.0;       // positive-part evaluation of p_O terms
    double destination_charge = 0.0;
    double total_fare = 0.0;
  };
  std::vector<PerRequest> per_request;
  double avg_toll_per_trip = 0.0;     // demand-weighted, USD per trip
  double total_demand_rate = 0.0;
};

/// Demand-weighted average toll and per-request fare breakdowns. Throws
/// MismatchedProvenance when flows and prices come from different solves.
TripTollSummary trip_toll_summary(const FlowSolution& flows, const PriceSchedule& prices,
                                  const Scenario& s);

/// Net outflow of a single commodity at each road node, over road arcs only
/// (road-node slot order). Shared by the pricing and equilibrium modules.
Eigen::VectorXd road_net_outflow(const Scenario& s, const Eigen::VectorXd& arc_flow);

/// Direct evaluation of the origin/destination charge terms
/// sum_j p_O(j) (net outflow)^+ + p_D(j) (net inflow)^+ for one commodity.
double origin_destination_charge(const Scenario& s, const PriceSchedule& prices,
                                 const Eigen::VectorXd& arc_flow);

std::string prices_to_csv(const PriceSchedule& prices, const Scenario& s);

/// Re-solves with different seeds and reports the largest variation across
/// price-relevant dual combinations; flags dual degeneracy (variation beyond
/// the threshold) instead of asserting a canonical schedule.
struct DualStabilityProbe {
  double max_variation = 0.0;
  bool degenerate = false;
};
DualStabilityProbe dual_stability_probe(const Scenario& s, const QuadraticProgram& qp,
                                        const VariableIndex& idx, const SolverOptions& opts,
                                        int reruns = 2, double threshold = 1e-4);

}  // namespace iamod
