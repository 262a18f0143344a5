#include "iamod/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "iamod/errors.hpp"

namespace iamod {

const char* to_string(SystemVariant variant) {
  switch (variant) {
    case SystemVariant::IAMoD: return "iamod";
    case SystemVariant::AMoDOnly: return "amod";
  }
  return "?";
}

ScenarioMetrics compute_metrics(const Scenario& s, const FlowSolution& flows,
                                const PriceSchedule& prices) {
  if (flows.provenance != prices.provenance) {
    fail(ErrorCode::MismatchedProvenance, "flows and prices come from different solves");
  }
  const LayeredNetwork& net = s.network;
  ScenarioMetrics m;

  double dist_road = 0.0, dist_walk = 0.0, dist_transit = 0.0;
  double time_flow = 0.0;
  for (const auto& f : flows.request_flows) {
    for (int a = 0; a < net.arc_count(); ++a) {
      const Arc& arc = net.arcs[static_cast<size_t>(a)];
      const double pd = arc.distance_m * f[a];  // passenger-distance rate
      switch (arc.kind) {
        case ArcKind::Road: dist_road += pd; break;
        case ArcKind::Transit: dist_transit += pd; break;
        case ArcKind::Walk:
        case ArcKind::Switch: dist_walk += pd; break;  // switching happens on foot
      }
      time_flow += arc.time_s * f[a];
    }
  }
  const double dist_total = dist_road + dist_walk + dist_transit;
  if (dist_total > 0.0) {
    m.modal_share_road = dist_road / dist_total;
    m.modal_share_walk = dist_walk / dist_total;
    m.modal_share_transit = dist_transit / dist_total;
  }

  const double demand = s.total_demand_rate();
  m.avg_travel_time_s = demand > 0.0 ? time_flow / demand : 0.0;

  m.monetary_cost_usd_h = flows.objective.time_cost + flows.objective.amod_operating_cost +
                          flows.objective.transit_operating_cost;
  m.regularization_usd_h = flows.objective.regularization;

  double road_energy_flow = 0.0;  // joules per hour
  double road_time_flow = 0.0;    // vehicle-seconds per hour
  for (int r = 0; r < net.road_arc_count(); ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    const double total = flows.rebalancing[r] + flows.customer_flow(a);
    road_energy_flow += *arc.energy_j * total;
    road_time_flow += arc.time_s * total;
  }
  m.emissions_kg_h = s.costs.carbon_intensity * road_energy_flow;
  m.fleet_size = road_time_flow / 3600.0;

  m.avg_toll_per_trip_usd = trip_toll_summary(flows, prices, s).avg_toll_per_trip;
  return m;
}

namespace {

SweepRow run_point(const Scenario& base, double fraction, SystemVariant variant,
                   const SweepOptions& opts) {
  SweepRow row;
  row.fraction = fraction;
  row.variant = variant;
  try {
    Scenario s = variant == SystemVariant::AMoDOnly ? zero_transit_capacity(base) : base;
    s = scale_road_capacity(std::move(s), fraction);

    auto [qp, idx] = assemble(s);
    SolveResult result = solve(qp, opts.solver);
    row.status = result.status;
    row.iterations = result.iterations;
    if (result.status != SolveStatus::Optimal) {
      row.error = std::string("solve: ") + to_string(result.status);
      return row;
    }

    FlowSolution flows = extract_flows(s, idx, result.x);
    PriceSchedule prices = derive_prices(result, s, idx);
    row.objective_usd_h = flows.objective.total;
    row.metrics = compute_metrics(s, flows, prices);
    if (opts.include_regularization) {
      row.metrics.monetary_cost_usd_h += row.metrics.regularization_usd_h;
    }

    if (opts.verify) {
      EquilibriumOptions eq = opts.equilibrium;
      eq.solver = opts.solver;
      eq.parallelism = 1;  // the sweep already parallelizes across points
      EquilibriumReport report = verify_equilibrium(s, flows, result, prices, eq);
      row.verified = report.pass;
      row.verify_deviation =
          std::max(report.max_request_deviation, report.rebalancing_deviation);
    }
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

}  // namespace

SweepTable sweep(const Scenario& s, const SweepOptions& opts) {
  SweepTable table;
  table.scenario_provenance = scenario_hash(s);

  struct Job {
    double fraction;
    SystemVariant variant;
  };
  std::vector<Job> jobs;
  for (double fraction : opts.fractions) {
    for (SystemVariant variant : opts.variants) jobs.push_back({fraction, variant});
  }
  table.rows.resize(jobs.size());

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      table.rows[i] = run_point(s, jobs[i].fraction, jobs[i].variant, opts);
    }
  };
  int n_threads = opts.parallelism > 0 ? opts.parallelism
                                       : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::clamp<int>(n_threads, 1, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  return table;
}

std::string sweep_to_csv(const SweepTable& table) {
  std::ostringstream out;
  out.precision(12);
  out << "fraction,variant,status,verified,share_road,share_walk,share_transit,"
         "avg_travel_time_s,monetary_cost_usd_h,emissions_kg_h,fleet_size,"
         "avg_toll_per_trip_usd,objective_usd_h,error\n";
  for (const SweepRow& row : table.rows) {
    out << row.fraction << ',' << to_string(row.variant) << ',' << to_string(row.status) << ','
        << (row.verified ? 1 : 0) << ',' << row.metrics.modal_share_road << ','
        << row.metrics.modal_share_walk << ',' << row.metrics.modal_share_transit << ','
        << row.metrics.avg_travel_time_s << ',' << row.metrics.monetary_cost_usd_h << ','
        << row.metrics.emissions_kg_h << ',' << row.metrics.fleet_size << ','
        << row.metrics.avg_toll_per_trip_usd << ',' << row.objective_usd_h << ','
        << row.error << "\n";
  }
  return out.str();
}

}  // namespace iamod
