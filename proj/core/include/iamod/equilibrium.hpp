#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "iamod/pricing.hpp"
#include "iamod/qpmodel.hpp"
#include "iamod/qpsolver.hpp"

namespace iamod {

struct EquilibriumOptions {
  double flow_tol = 1e-4;          // relative flow-deviation threshold
  double stationarity_tol = 0.0;   // 0 -> derived from the solve's dual residual
  double activity_threshold = 1e-6;  // flow > threshold * rate counts as active
  SolverOptions solver;
  int parallelism = 0;  // 0 -> hardware concurrency
};

/// Outcome of checking that selfish best responses under the derived prices
/// reproduce the social optimum.
struct EquilibriumReport {
  struct PerRequest {
    int request = -1;
    double max_deviation = 0.0;  // relative, denominator max(1, alpha_m)
    double l2_deviation = 0.0;
  };
  std::vector<PerRequest> per_request;

  double max_request_deviation = 0.0;
  double rebalancing_deviation = 0.0;

  double customer_stationarity = 0.0;  // worst residual over active arcs,
                                       // one-sided violation on inactive ones
  double operator_stationarity = 0.0;
  double stationarity_tol_used = 0.0;

  bool pass = false;
  std::vector<std::string> notes;
};

/// Best response of one customer: cheapest feasible commodity flow under the
/// posted prices. The positive-part origin/destination terms are reformulated
/// exactly with per-road-node nonnegative split variables u - w = net outflow
/// (exact whenever p_O + p_D >= 0; the derived schedule has p_O + p_D = 0).
/// Throws UnboundedCustomerProblem when the schedule admits unbounded
/// decrease (p_O + p_D < 0 at some node).
Eigen::VectorXd customer_best_response(const Scenario& s, const PriceSchedule& prices,
                                       int request, const SolverOptions& opts = {});

/// Best response of the (folded) AMoD operator: cheapest rebalancing flow
/// given fixed customer road flows and posted tolls. customer_road_flow is in
/// road-slot order. Throws InfeasibleRebalancing when no rebalancing flow can
/// balance the given customer flows.
Eigen::VectorXd operator_best_response(const Scenario& s, const Eigen::VectorXd& road_tolls,
                                       const Eigen::VectorXd& customer_road_flow,
                                       const SolverOptions& opts = {});

/// Runs every best response, compares against the social optimum and checks
/// the stationarity systems of both selfish problems using the social duals.
EquilibriumReport verify_equilibrium(const Scenario& s, const FlowSolution& social,
                                     const SolveResult& result, const PriceSchedule& prices,
                                     const EquilibriumOptions& opts = {});

}  // namespace iamod
