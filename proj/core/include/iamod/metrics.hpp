#pragma once

#include <string>
#include <vector>

#include "iamod/equilibrium.hpp"
#include "iamod/pricing.hpp"
#include "iamod/qpmodel.hpp"

namespace iamod {

struct ScenarioMetrics {
  double modal_share_road = 0.0;     // fractions of passenger-distance
  double modal_share_walk = 0.0;     // includes mode-switching arcs
  double modal_share_transit = 0.0;
  double avg_travel_time_s = 0.0;    // demand-weighted, per customer
  double monetary_cost_usd_h = 0.0;  // social cost without regularization
  double regularization_usd_h = 0.0;
  double emissions_kg_h = 0.0;
  double fleet_size = 0.0;           // steady-state estimate: sum of t * road flow / 3600
  double avg_toll_per_trip_usd = 0.0;
};

ScenarioMetrics compute_metrics(const Scenario& s, const FlowSolution& flows,
                                const PriceSchedule& prices);

enum class SystemVariant { IAMoD, AMoDOnly };

const char* to_string(SystemVariant variant);

struct SweepRow {
  double fraction = 1.0;
  SystemVariant variant = SystemVariant::IAMoD;
  SolveStatus status = SolveStatus::IterationLimit;
  int iterations = 0;
  bool verified = false;
  double verify_deviation = 0.0;
  double objective_usd_h = 0.0;
  ScenarioMetrics metrics;
  std::string error;  // nonempty when this point failed
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::uint64_t scenario_provenance = 0;
};

struct SweepOptions {
  // Default band: 0..10% of empty-road capacity available to the fleet.
  std::vector<double> fractions = {0.10, 0.09, 0.08, 0.07, 0.06, 0.05,
                                   0.04, 0.03, 0.02, 0.01, 0.0};
  std::vector<SystemVariant> variants = {SystemVariant::IAMoD, SystemVariant::AMoDOnly};
  SolverOptions solver;
  bool verify = true;
  EquilibriumOptions equilibrium;
  int parallelism = 0;  // 0 -> hardware concurrency
  bool include_regularization = false;
};

/// Capacity-scaling study: solves, prices, verifies and measures every
/// (fraction, variant) point. Failures are recorded per row; rows come back
/// in deterministic (fraction-major, variant-minor) order regardless of the
/// parallelism used.
SweepTable sweep(const Scenario& s, const SweepOptions& opts);

std::string sweep_to_csv(const SweepTable& table);

}  // namespace iamod
