#pragma once

#include <string>
#include <vector>

#include "iamod/types.hpp"

namespace iamod {

/// Three-layer intermodal digraph: road, walking and public transit layers
/// plus mode-switching arcs between the walking layer and the other two.
/// Immutable after build_network; safe to share across threads.
struct LayeredNetwork {
  std::vector<Node> nodes;
  std::vector<Arc> arcs;

  // Adjacency: arc indices per node.
  std::vector<std::vector<int>> out_arcs;
  std::vector<std::vector<int>> in_arcs;

  // Arc indices by kind, in arc order. Road/transit "slots" index these lists.
  std::vector<int> road_arcs;
  std::vector<int> transit_arcs;

  // arc index -> slot within road_arcs / transit_arcs, or -1.
  std::vector<int> arc_road_slot;
  std::vector<int> arc_transit_slot;

  // node id -> slot in road_nodes, or -1.
  std::vector<int> road_nodes;
  std::vector<int> road_node_slot;

  std::vector<std::string> warnings;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int arc_count() const { return static_cast<int>(arcs.size()); }
  int road_arc_count() const { return static_cast<int>(road_arcs.size()); }
  int transit_arc_count() const { return static_cast<int>(transit_arcs.size()); }
  int road_node_count() const { return static_cast<int>(road_nodes.size()); }
};

/// Single-vehicle traversal energy for a road arc, in joules: drag plus
/// rolling resistance at constant speed v = d/t, divided by the tank-to-wheel
/// efficiency. Strictly increasing in speed for fixed distance, linear in
/// distance for fixed speed.
double arc_energy(double distance_m, double time_s, const VehicleParams& vehicle);

/// Validates layer structure, fills in road-arc energies and adjacency
/// indices. Input arc energies are ignored and recomputed.
LayeredNetwork build_network(std::vector<Node> nodes, std::vector<Arc> arcs,
                             const VehicleParams& vehicle);

struct FeasibilityReport {
  struct Entry {
    int request = -1;
    bool feasible = false;
  };
  std::vector<Entry> per_request;
  bool feasible = false;  // all requests walk-reachable
};

/// Checks, per request, whether a walking-only path origin -> destination
/// exists. The walking layer is what guarantees feasibility of the flow
/// problem, so an infeasible entry here flags a scenario defect.
FeasibilityReport connectivity_report(const LayeredNetwork& net,
                                      const std::vector<Request>& requests);

}  // namespace iamod
