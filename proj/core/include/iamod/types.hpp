#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace iamod {

using NodeId = std::int32_t;

enum class Layer : std::uint8_t { Walk, Road, Transit };
enum class ArcKind : std::uint8_t { Walk, Road, Transit, Switch };

const char* to_string(Layer layer);
const char* to_string(ArcKind kind);

struct Node {
  NodeId id = -1;
  Layer layer = Layer::Walk;
  // Planar coordinates in meters, reporting only; never enters the model.
  std::optional<std::array<double, 2>> position;
};

struct Arc {
  NodeId tail = -1;
  NodeId head = -1;
  ArcKind kind = ArcKind::Walk;
  double time_s = 0.0;
  double distance_m = 0.0;
  // Present exactly on Road and Transit arcs (customers-or-vehicles per hour).
  std::optional<double> capacity_per_h;
  // Per-traversal energy in joules; derived for Road arcs at build time.
  std::optional<double> energy_j;
};

/// A travel request: origin/destination on the walking layer, demand rate in
/// customers per hour.
struct Request {
  NodeId origin = -1;
  NodeId destination = -1;
  double rate_per_h = 0.0;
};

/// Cost parameters in canonical units (see units.hpp).
struct CostParams {
  double value_of_time = 24.40 / 3600.0;            // USD per second
  double amod_distance_cost = 0.486 / 1609.344;     // USD per meter
  double energy_cost = 0.247 / 3.6e6;               // USD per joule
  double transit_distance_cost = 0.47 / 1609.344;   // USD per meter
  double regularization = 1e-6;                     // USD per (customers/h)^2
  double carbon_intensity = 0.08 / 3.6e6;           // kg CO2 per joule, reporting only
};

struct VehicleParams {
  double air_density = 1.25;    // kg/m^3
  double drag_area = 0.4;       // c_d * A_f, m^2
  double rolling_coeff = 0.008; // dimensionless
  double mass = 750.0;          // kg
  double efficiency = 0.72;     // tank-to-wheel, in (0, 1]
};

}  // namespace iamod
