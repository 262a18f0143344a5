#include "iamod/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string_view>

#include "iamod/errors.hpp"

namespace iamod {

namespace {

// Capacity duals from the solver are >= 0 up to solver tolerance; pricing is
// the single place where tiny negatives get normalized away so every
// downstream consumer sees clean signs.
double clamp_dual(double mu) { return mu < 0.0 ? 0.0 : mu; }

}  // namespace

PriceSchedule derive_prices(const SolveResult& result, const Scenario& s,
                            const VariableIndex& idx) {
  if (result.status != SolveStatus::Optimal) {
    fail(ErrorCode::NotOptimal, "prices require an optimal solve");
  }
  const LayeredNetwork& net = s.network;

  PriceSchedule p;
  p.transit_fares.resize(idx.n_transit_arcs);
  p.road_tolls.resize(idx.n_road_arcs);
  p.amod_arc_charges.resize(idx.n_road_arcs);
  p.origin_charges.resize(net.road_node_count());
  p.destination_charges.resize(net.road_node_count());

  for (int t = 0; t < idx.n_transit_arcs; ++t) {
    const Arc& arc = net.arcs[static_cast<size_t>(net.transit_arcs[static_cast<size_t>(t)])];
    const double mu = clamp_dual(result.z[idx.transit_cap_row(t)]);
    p.transit_fares[t] = s.costs.transit_distance_cost * arc.distance_m + mu;
  }
  for (int r = 0; r < idx.n_road_arcs; ++r) {
    const Arc& arc = net.arcs[static_cast<size_t>(net.road_arcs[static_cast<size_t>(r)])];
    const double toll = clamp_dual(result.z[idx.road_cap_row(r)]);
    p.road_tolls[r] = toll;
    p.amod_arc_charges[r] = s.costs.amod_distance_cost * arc.distance_m +
                            s.costs.energy_cost * *arc.energy_j + toll;
  }
  for (int slot = 0; slot < net.road_node_count(); ++slot) {
    const double lambda_r = result.y[idx.vehicle_row(slot)];
    p.destination_charges[slot] = lambda_r;
    p.origin_charges[slot] = -lambda_r;  // exact antisymmetry by construction
  }
  p.provenance = content_hash(std::string_view(
      reinterpret_cast<const char*>(result.x.data()), result.x.size() * sizeof(double)));
  return p;
}

Eigen::VectorXd road_net_outflow(const Scenario& s, const Eigen::VectorXd& arc_flow) {
  const LayeredNetwork& net = s.network;
  if (arc_flow.size() != net.arc_count()) {
    fail(ErrorCode::DimensionMismatch, "arc flow vector has wrong size");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(net.road_node_count());
  for (int r = 0; r < net.road_arc_count(); ++r) {
    const int a = net.road_arcs[static_cast<size_t>(r)];
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    out[net.road_node_slot[static_cast<size_t>(arc.tail)]] += arc_flow[a];
    out[net.road_node_slot[static_cast<size_t>(arc.head)]] -= arc_flow[a];
  }
  return out;
}

double origin_destination_charge(const Scenario& s, const PriceSchedule& prices,
                                 const Eigen::VectorXd& arc_flow) {
  const Eigen::VectorXd net_out = road_net_outflow(s, arc_flow);
  double charge = 0.0;
  for (int slot = 0; slot < net_out.size(); ++slot) {
    charge += prices.origin_charges[slot] * std::max(net_out[slot], 0.0);
    charge += prices.destination_charges[slot] * std::max(-net_out[slot], 0.0);
  }
  return charge;
}

TripTollSummary trip_toll_summary(const FlowSolution& flows, const PriceSchedule& prices,
                                  const Scenario& s) {
  if (flows.provenance != prices.provenance) {
    fail(ErrorCode::MismatchedProvenance, "flows and prices come from different solves");
  }
  const LayeredNetwork& net = s.network;
  TripTollSummary summary;
  summary.total_demand_rate = s.total_demand_rate();

  double toll_flow = 0.0;  // USD per hour of tolls on customer-carrying road flow
  for (size_t m = 0; m < flows.request_flows.size(); ++m) {
    const Eigen::VectorXd& f = flows.request_flows[m];
    const double alpha = s.requests[m].rate_per_h;
    TripTollSummary::PerRequest row;
    for (int r = 0; r < net.road_arc_count(); ++r) {
      const int a = net.road_arcs[static_cast<size_t>(r)];
      row.toll += prices.road_tolls[r] * f[a];
      row.road_fare += prices.amod_arc_charges[r] * f[a];
    }
    for (int t = 0; t < net.transit_arc_count(); ++t) {
      const int a = net.transit_arcs[static_cast<size_t>(t)];
      row.transit_fare += prices.transit_fares[t] * f[a];
    }
    const Eigen::VectorXd net_out = road_net_outflow(s, f);
    for (int slot = 0; slot < net_out.size(); ++slot) {
      row.origin_charge += prices.origin_charges[slot] * std::max(net_out[slot], 0.0);
      row.destination_charge += prices.destination_charges[slot] * std::max(-net_out[slot], 0.0);
    }
    toll_flow += row.toll;

    // Per-trip values: divide the per-hour money flow by the request rate.
    row.toll /= alpha;
    row.road_fare /= alpha;
    row.transit_fare /= alpha;
    row.origin_charge /= alpha;
    row.destination_charge /= alpha;
    row.total_fare = row.road_fare + row.transit_fare + row.origin_charge + row.destination_charge;
    summary.per_request.push_back(row);
  }

  summary.avg_toll_per_trip =
      summary.total_demand_rate > 0.0 ? toll_flow / summary.total_demand_rate : 0.0;
  return summary;
}

std::string prices_to_csv(const PriceSchedule& prices, const Scenario& s) {
  const LayeredNetwork& net = s.network;
  std::ostringstream out;
  out.precision(12);
  out << "arc_id,kind,toll_usd,fare_usd,arc_charge_usd\n";
  for (int r = 0; r < net.road_arc_count(); ++r) {
    out << net.road_arcs[static_cast<size_t>(r)] << ",road," << prices.road_tolls[r] << ",,"
        << prices.amod_arc_charges[r] << "\n";
  }
  for (int t = 0; t < net.transit_arc_count(); ++t) {
    out << net.transit_arcs[static_cast<size_t>(t)] << ",transit,," << prices.transit_fares[t]
        << ",\n";
  }
  out << "\nnode_id,origin_charge_usd,destination_charge_usd\n";
  for (int slot = 0; slot < net.road_node_count(); ++slot) {
    out << net.road_nodes[static_cast<size_t>(slot)] << "," << prices.origin_charges[slot] << ","
        << prices.destination_charges[slot] << "\n";
  }
  return out.str();
}

DualStabilityProbe dual_stability_probe(const Scenario& s, const QuadraticProgram& qp,
                                        const VariableIndex& idx, const SolverOptions& opts,
                                        int reruns, double threshold) {
  DualStabilityProbe probe;
  std::vector<PriceSchedule> schedules;
  std::vector<int> component;  // per road-node slot, from the first run's flow support
  for (int run = 0; run < reruns; ++run) {
    SolverOptions local = opts;
    local.seed = opts.seed + static_cast<std::uint64_t>(run + 1) * 7919ULL;
    SolveResult result = solve(qp, local);
    if (result.status != SolveStatus::Optimal) continue;
    schedules.push_back(derive_prices(result, s, idx));

    if (component.empty()) {
      // Destination charges are pinned by stationarity only along road arcs
      // that carry flow; group nodes by the connected components of that
      // support so shift ambiguity between unused regions is not mistaken for
      // dual degeneracy.
      const LayeredNetwork& net = s.network;
      const double thr = 1e-6 * std::max(1.0, s.total_demand_rate());
      component.assign(static_cast<size_t>(net.road_node_count()), -1);
      std::vector<std::vector<int>> adj(static_cast<size_t>(net.road_node_count()));
      for (int r = 0; r < idx.n_road_arcs; ++r) {
        double total = result.x[idx.reba_col(r)];
        const int a = net.road_arcs[static_cast<size_t>(r)];
        for (int m = 0; m < idx.n_requests; ++m) total += result.x[idx.flow_col(m, a)];
        if (total > thr) {
          const Arc& arc = net.arcs[static_cast<size_t>(a)];
          const int u = net.road_node_slot[static_cast<size_t>(arc.tail)];
          const int v = net.road_node_slot[static_cast<size_t>(arc.head)];
          adj[static_cast<size_t>(u)].push_back(v);
          adj[static_cast<size_t>(v)].push_back(u);
        }
      }
      int next_component = 0;
      std::vector<int> stack;
      for (int seed_node = 0; seed_node < net.road_node_count(); ++seed_node) {
        if (component[static_cast<size_t>(seed_node)] >= 0) continue;
        component[static_cast<size_t>(seed_node)] = next_component;
        stack.push_back(seed_node);
        while (!stack.empty()) {
          const int u = stack.back();
          stack.pop_back();
          for (int v : adj[static_cast<size_t>(u)]) {
            if (component[static_cast<size_t>(v)] < 0) {
              component[static_cast<size_t>(v)] = next_component;
              stack.push_back(v);
            }
          }
        }
        ++next_component;
      }
    }
  }

  for (size_t a = 0; a + 1 < schedules.size(); ++a) {
    const PriceSchedule& p0 = schedules[a];
    const PriceSchedule& p1 = schedules[a + 1];
    double diff = 0.0;
    auto track = [&diff](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
      if (u.size()) diff = std::max(diff, (u - v).cwiseAbs().maxCoeff());
    };
    track(p0.road_tolls, p1.road_tolls);
    track(p0.transit_fares, p1.transit_fares);
    // Within each support component, charges are meaningful up to a constant;
    // compare against a per-component reference node.
    const int slots = static_cast<int>(p0.destination_charges.size());
    std::vector<int> reference;
    for (int slot = 0; slot < slots; ++slot) {
      const int comp = component[static_cast<size_t>(slot)];
      while (static_cast<int>(reference.size()) <= comp) reference.push_back(-1);
      if (reference[static_cast<size_t>(comp)] < 0) reference[static_cast<size_t>(comp)] = slot;
      const int ref = reference[static_cast<size_t>(comp)];
      const double d0 = p0.destination_charges[slot] - p0.destination_charges[ref];
      const double d1 = p1.destination_charges[slot] - p1.destination_charges[ref];
      diff = std::max(diff, std::abs(d0 - d1));
    }
    probe.max_variation = std::max(probe.max_variation, diff);
  }
  probe.degenerate = probe.max_variation > threshold;
  return probe;
}

}  // namespace iamod
