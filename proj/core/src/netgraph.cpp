#include "iamod/netgraph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <tuple>

#include "iamod/errors.hpp"

namespace iamod {

namespace {

constexpr double kGravity = 9.81;  // m/s^2

bool legal_arc(Layer tail, Layer head, ArcKind kind) {
  switch (kind) {
    case ArcKind::Walk:
      return tail == Layer::Walk && head == Layer::Walk;
    case ArcKind::Road:
      return tail == Layer::Road && head == Layer::Road;
    case ArcKind::Transit:
      return tail == Layer::Transit && head == Layer::Transit;
    case ArcKind::Switch:
      return (tail == Layer::Walk && (head == Layer::Road || head == Layer::Transit)) ||
             (head == Layer::Walk && (tail == Layer::Road || tail == Layer::Transit));
  }
  return false;
}

// Directed reachability from the given seed set.
std::vector<char> reach(const LayeredNetwork& net, const std::vector<int>& seeds, bool forward) {
  std::vector<char> seen(net.nodes.size(), 0);
  std::deque<int> queue;
  for (int s : seeds) {
    seen[static_cast<size_t>(s)] = 1;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    const auto& adj = forward ? net.out_arcs[static_cast<size_t>(u)]
                              : net.in_arcs[static_cast<size_t>(u)];
    for (int a : adj) {
      const Arc& arc = net.arcs[static_cast<size_t>(a)];
      int v = forward ? arc.head : arc.tail;
      if (!seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        queue.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace

const char* to_string(Layer layer) {
  switch (layer) {
    case Layer::Walk: return "walk";
    case Layer::Road: return "road";
    case Layer::Transit: return "transit";
  }
  return "?";
}

const char* to_string(ArcKind kind) {
  switch (kind) {
    case ArcKind::Walk: return "walk";
    case ArcKind::Road: return "road";
    case ArcKind::Transit: return "transit";
    case ArcKind::Switch: return "switch";
  }
  return "?";
}

double arc_energy(double distance_m, double time_s, const VehicleParams& vehicle) {
  if (distance_m <= 0.0) fail(ErrorCode::NonPositiveInput, "arc_energy: distance must be > 0");
  if (time_s <= 0.0) fail(ErrorCode::NonPositiveInput, "arc_energy: time must be > 0");
  if (vehicle.air_density <= 0.0 || vehicle.drag_area <= 0.0 || vehicle.rolling_coeff <= 0.0 ||
      vehicle.mass <= 0.0 || vehicle.efficiency <= 0.0) {
    fail(ErrorCode::NonPositiveInput, "arc_energy: vehicle parameters must be > 0");
  }
  if (vehicle.efficiency > 1.0) {
    fail(ErrorCode::BadArgument, "arc_energy: efficiency must be in (0, 1]");
  }
  const double v = distance_m / time_s;
  const double drag = 0.5 * vehicle.air_density * vehicle.drag_area * v * v;
  const double rolling = vehicle.rolling_coeff * vehicle.mass * kGravity;
  return (drag + rolling) * distance_m / vehicle.efficiency;
}

LayeredNetwork build_network(std::vector<Node> nodes, std::vector<Arc> arcs,
                             const VehicleParams& vehicle) {
  const int n = static_cast<int>(nodes.size());

  std::vector<char> seen_id(static_cast<size_t>(n), 0);
  for (const Node& node : nodes) {
    if (node.id < 0 || node.id >= n) {
      fail(ErrorCode::BadArgument, "node ids must form a dense 0..N-1 range");
    }
    if (seen_id[static_cast<size_t>(node.id)]) {
      fail(ErrorCode::BadArgument, "duplicate node id " + std::to_string(node.id));
    }
    seen_id[static_cast<size_t>(node.id)] = 1;
  }
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });

  std::set<std::tuple<NodeId, NodeId, ArcKind>> arc_keys;
  for (Arc& arc : arcs) {
    if (arc.tail < 0 || arc.tail >= n || arc.head < 0 || arc.head >= n) {
      fail(ErrorCode::BadArgument, "arc endpoint out of range");
    }
    if (arc.tail == arc.head) {
      fail(ErrorCode::BadArgument, "self-loop arcs are not allowed");
    }
    if (!arc_keys.insert({arc.tail, arc.head, arc.kind}).second) {
      fail(ErrorCode::BadArgument, "duplicate (tail, head, kind) arc");
    }

    const Layer tl = nodes[static_cast<size_t>(arc.tail)].layer;
    const Layer hl = nodes[static_cast<size_t>(arc.head)].layer;
    if (!legal_arc(tl, hl, arc.kind)) {
      fail(ErrorCode::LayerViolation, std::string("arc kind ") + to_string(arc.kind) +
                                          " cannot connect " + to_string(tl) + " to " +
                                          to_string(hl));
    }

    if (arc.time_s <= 0.0) {
      fail(ErrorCode::NonPositiveTime, "arc traversal time must be > 0");
    }
    if (arc.distance_m < 0.0) {
      fail(ErrorCode::NonPositiveInput, "arc distance must be >= 0");
    }

    const bool capacitated = arc.kind == ArcKind::Road || arc.kind == ArcKind::Transit;
    if (capacitated) {
      if (arc.distance_m <= 0.0) {
        fail(ErrorCode::NonPositiveInput,
             std::string(to_string(arc.kind)) + " arc distance must be > 0");
      }
      if (!arc.capacity_per_h) {
        fail(ErrorCode::MissingCapacity,
             std::string(to_string(arc.kind)) + " arc requires a capacity");
      }
      if (*arc.capacity_per_h < 0.0) {
        fail(ErrorCode::NonPositiveInput, "capacity must be >= 0");
      }
    } else if (arc.capacity_per_h) {
      fail(ErrorCode::BadArgument, "walk and switch arcs are uncapacitated");
    }

    arc.energy_j = (arc.kind == ArcKind::Road)
                       ? std::optional<double>(arc_energy(arc.distance_m, arc.time_s, vehicle))
                       : std::nullopt;
  }

  LayeredNetwork net;
  net.nodes = std::move(nodes);
  net.arcs = std::move(arcs);
  net.out_arcs.assign(static_cast<size_t>(n), {});
  net.in_arcs.assign(static_cast<size_t>(n), {});
  net.road_node_slot.assign(static_cast<size_t>(n), -1);

  net.arc_road_slot.assign(net.arcs.size(), -1);
  net.arc_transit_slot.assign(net.arcs.size(), -1);
  for (int a = 0; a < net.arc_count(); ++a) {
    const Arc& arc = net.arcs[static_cast<size_t>(a)];
    net.out_arcs[static_cast<size_t>(arc.tail)].push_back(a);
    net.in_arcs[static_cast<size_t>(arc.head)].push_back(a);
    if (arc.kind == ArcKind::Road) {
      net.arc_road_slot[static_cast<size_t>(a)] = static_cast<int>(net.road_arcs.size());
      net.road_arcs.push_back(a);
    }
    if (arc.kind == ArcKind::Transit) {
      net.arc_transit_slot[static_cast<size_t>(a)] = static_cast<int>(net.transit_arcs.size());
      net.transit_arcs.push_back(a);
    }
  }
  for (int v = 0; v < n; ++v) {
    if (net.nodes[static_cast<size_t>(v)].layer == Layer::Road) {
      net.road_node_slot[static_cast<size_t>(v)] = static_cast<int>(net.road_nodes.size());
      net.road_nodes.push_back(v);
    }
  }

  // Non-walk nodes unreachable from (or unable to reach) the walking layer are
  // dead weight: no customer can ever use them.
  std::vector<int> walk_seeds;
  for (int v = 0; v < n; ++v) {
    if (net.nodes[static_cast<size_t>(v)].layer == Layer::Walk) walk_seeds.push_back(v);
  }
  if (!walk_seeds.empty()) {
    const auto from_walk = reach(net, walk_seeds, true);
    const auto to_walk = reach(net, walk_seeds, false);
    for (int v = 0; v < n; ++v) {
      if (net.nodes[static_cast<size_t>(v)].layer == Layer::Walk) continue;
      if (!from_walk[static_cast<size_t>(v)] || !to_walk[static_cast<size_t>(v)]) {
        net.warnings.push_back("node " + std::to_string(v) +
                               " is not connected to the walking layer in both directions");
      }
    }
  }

  return net;
}

FeasibilityReport connectivity_report(const LayeredNetwork& net,
                                      const std::vector<Request>& requests) {
  FeasibilityReport report;
  report.feasible = true;

  // Walking-only reachability per origin, memoized.
  std::vector<std::vector<char>> memo(net.nodes.size());
  auto walk_reach = [&](int origin) -> const std::vector<char>& {
    auto& cached = memo[static_cast<size_t>(origin)];
    if (!cached.empty()) return cached;
    cached.assign(net.nodes.size(), 0);
    std::deque<int> queue{origin};
    cached[static_cast<size_t>(origin)] = 1;
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (int a : net.out_arcs[static_cast<size_t>(u)]) {
        const Arc& arc = net.arcs[static_cast<size_t>(a)];
        if (arc.kind != ArcKind::Walk) continue;
        if (!cached[static_cast<size_t>(arc.head)]) {
          cached[static_cast<size_t>(arc.head)] = 1;
          queue.push_back(arc.head);
        }
      }
    }
    return cached;
  };

  for (int m = 0; m < static_cast<int>(requests.size()); ++m) {
    const Request& r = requests[static_cast<size_t>(m)];
    bool ok = r.origin >= 0 && r.origin < net.node_count() && r.destination >= 0 &&
              r.destination < net.node_count() &&
              net.nodes[static_cast<size_t>(r.origin)].layer == Layer::Walk &&
              net.nodes[static_cast<size_t>(r.destination)].layer == Layer::Walk &&
              walk_reach(r.origin)[static_cast<size_t>(r.destination)];
    report.per_request.push_back({m, ok});
    report.feasible = report.feasible && ok;
  }
  return report;
}

}  // namespace iamod
