#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iamod/netgraph.hpp"
#include "iamod/types.hpp"

namespace iamod {

/// Network + demand + cost parameters. Values are immutable in spirit:
/// transformations return new scenarios.
struct Scenario {
  LayeredNetwork network;
  std::vector<Request> requests;
  CostParams costs;
  VehicleParams vehicle;
  std::string label;

  // Road capacities are stored unscaled; the sweep harness composes fractions
  // into this factor so that repeated scaling is exactly multiplicative.
  double road_capacity_factor = 1.0;

  std::vector<std::string> warnings;  // load-time notes; not serialized

  /// Effective road capacity of arc `arc_index` (must be a Road arc).
  double road_capacity(int arc_index) const;
  /// Effective transit capacity of arc `arc_index` (must be a Transit arc).
  double transit_capacity(int arc_index) const;

  double total_demand_rate() const;
};

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& s);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// Multiplies every road-arc capacity by `fraction` in [0, 1].
Scenario scale_road_capacity(Scenario s, double fraction);

/// Sets every transit-arc capacity to zero (the AMoD-only ablation).
Scenario zero_transit_capacity(Scenario s);

struct TransitLine {
  bool horizontal = true;
  int index = 0;        // row (horizontal) or column (vertical)
  int stop_every = 2;   // blocks between stops
  double headway_s = 600.0;
};

struct GridSpec {
  int rows = 4;
  int cols = 4;
  double block_m = 400.0;
  std::vector<TransitLine> lines;  // empty -> one middle row + one middle column
  int n_requests = 8;
  double walk_speed_mps = 1.4;
  double road_speed_mps = 125.0 / 9.0;  // 50 km/h
  double transit_speed_mps = 15.0;
  int lanes = 2;
  // Road capacity = coeff * lanes * speed limit; the proportionality constant
  // is not pinned by any physical argument, so it stays a parameter.
  double road_capacity_coeff = 36.0;
  double transit_capacity_per_h = 400.0;
  double demand_rate_lo = 50.0;
  double demand_rate_hi = 150.0;
};

/// Synthetic scenario generator: walk grid, one-way road pairs on the same
/// topology, straight transit lines with headway-derived boarding times, and
/// seeded random walk-to-walk requests. Deterministic: equal seeds yield
/// byte-identical scenarios.
Scenario grid_scenario(const GridSpec& spec, std::uint64_t demand_seed);

Scenario grid_scenario(int rows, int cols, double block_m,
                       const std::vector<TransitLine>& lines, std::uint64_t demand_seed);

/// FNV-1a content hash used for artifact provenance chains.
std::uint64_t content_hash(std::string_view bytes);
std::uint64_t scenario_hash(const Scenario& s);

}  // namespace iamod
