#include "iamod/scenario.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "iamod/errors.hpp"
#include "iamod/units.hpp"

namespace iamod {

namespace units {

namespace {
// Tag -> factor such that canonical = printed * factor.
double factor_for(std::string_view unit) {
  if (unit == "usd_per_hour") return 1.0 / kSecondsPerHour;
  if (unit == "usd_per_minute") return 1.0 / 60.0;
  if (unit == "usd_per_second") return 1.0;
  if (unit == "usd_per_mile") return 1.0 / kMetersPerMile;
  if (unit == "usd_per_km") return 1.0 / kMetersPerKm;
  if (unit == "usd_per_meter") return 1.0;
  if (unit == "usd_per_kwh") return 1.0 / kJoulesPerKwh;
  if (unit == "usd_per_joule") return 1.0;
  if (unit == "kg_per_kwh") return 1.0 / kJoulesPerKwh;
  if (unit == "kg_per_joule") return 1.0;
  if (unit == "usd_per_flow_sq") return 1.0;
  fail(ErrorCode::UnitError, "unrecognized unit tag '" + std::string(unit) + "'");
}
}  // namespace

bool known_unit(std::string_view unit) {
  try {
    factor_for(unit);
    return true;
  } catch (const Error&) {
    return false;
  }
}

double to_canonical(double value, std::string_view unit) { return value * factor_for(unit); }
double from_canonical(double value, std::string_view unit) { return value / factor_for(unit); }

}  // namespace units

double Scenario::road_capacity(int arc_index) const {
  return *network.arcs[static_cast<size_t>(arc_index)].capacity_per_h * road_capacity_factor;
}

double Scenario::transit_capacity(int arc_index) const {
  return *network.arcs[static_cast<size_t>(arc_index)].capacity_per_h;
}

double Scenario::total_demand_rate() const {
  double total = 0.0;
  for (const Request& r : requests) total += r.rate_per_h;
  return total;
}

namespace {

using json = nlohmann::ordered_json;

Layer layer_from_string(const std::string& text) {
  if (text == "walk") return Layer::Walk;
  if (text == "road") return Layer::Road;
  if (text == "transit") return Layer::Transit;
  fail(ErrorCode::SchemaError, "unknown layer '" + text + "'");
}

ArcKind kind_from_string(const std::string& text) {
  if (text == "walk") return ArcKind::Walk;
  if (text == "road") return ArcKind::Road;
  if (text == "transit") return ArcKind::Transit;
  if (text == "switch") return ArcKind::Switch;
  fail(ErrorCode::SchemaError, "unknown arc kind '" + text + "'");
}

double tagged_value(const json& j, const std::string& field) {
  if (!j.contains(field)) fail(ErrorCode::SchemaError, "costs: missing field '" + field + "'");
  const json& v = j.at(field);
  if (!v.is_object() || !v.contains("value") || !v.contains("unit")) {
    fail(ErrorCode::SchemaError, "costs." + field + ": expected {value, unit}");
  }
  return units::to_canonical(v.at("value").get<double>(), v.at("unit").get<std::string>());
}

json tagged(double canonical, const char* unit) {
  return json{{"value", units::from_canonical(canonical, unit)}, {"unit", unit}};
}

double require_number(const json& j, const char* ctx, const char* field) {
  if (!j.contains(field) || !j.at(field).is_number()) {
    fail(ErrorCode::SchemaError, std::string(ctx) + ": missing numeric field '" + field + "'");
  }
  return j.at(field).get<double>();
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::SchemaError, e.what());
  }
  for (const char* key : {"nodes", "arcs", "requests", "costs", "vehicle"}) {
    if (!doc.contains(key)) fail(ErrorCode::SchemaError, std::string("missing top-level '") + key + "'");
  }

  Scenario s;
  if (doc.contains("meta")) {
    s.label = doc["meta"].value("label", "");
    s.road_capacity_factor = doc["meta"].value("road_capacity_factor", 1.0);
  }

  const json& jv = doc["vehicle"];
  s.vehicle.air_density = require_number(jv, "vehicle", "air_density_kg_m3");
  s.vehicle.drag_area = require_number(jv, "vehicle", "drag_area_m2");
  s.vehicle.rolling_coeff = require_number(jv, "vehicle", "rolling_coeff");
  s.vehicle.mass = require_number(jv, "vehicle", "mass_kg");
  s.vehicle.efficiency = require_number(jv, "vehicle", "efficiency");

  const json& jc = doc["costs"];
  s.costs.value_of_time = tagged_value(jc, "value_of_time");
  s.costs.amod_distance_cost = tagged_value(jc, "amod_distance_cost");
  s.costs.energy_cost = tagged_value(jc, "energy_cost");
  s.costs.transit_distance_cost = tagged_value(jc, "transit_distance_cost");
  s.costs.regularization = tagged_value(jc, "regularization");
  s.costs.carbon_intensity = tagged_value(jc, "carbon_intensity");
  if (s.costs.regularization <= 0.0) {
    fail(ErrorCode::SchemaError, "costs.regularization must be > 0 (strict convexity)");
  }

  std::vector<Node> nodes;
  for (const json& jn : doc["nodes"]) {
    Node node;
    node.id = static_cast<NodeId>(require_number(jn, "node", "id"));
    node.layer = layer_from_string(jn.value("layer", ""));
    if (jn.contains("x_m") && jn.contains("y_m")) {
      node.position = {{jn.at("x_m").get<double>(), jn.at("y_m").get<double>()}};
    }
    nodes.push_back(node);
  }

  std::vector<Arc> arcs;
  for (const json& ja : doc["arcs"]) {
    Arc arc;
    arc.tail = static_cast<NodeId>(require_number(ja, "arc", "tail"));
    arc.head = static_cast<NodeId>(require_number(ja, "arc", "head"));
    arc.kind = kind_from_string(ja.value("kind", ""));
    arc.time_s = require_number(ja, "arc", "time_s");
    arc.distance_m = require_number(ja, "arc", "distance_m");
    if (ja.contains("capacity_per_h")) arc.capacity_per_h = ja.at("capacity_per_h").get<double>();
    arcs.push_back(arc);
  }

  s.network = build_network(std::move(nodes), std::move(arcs), s.vehicle);

  for (const json& jr : doc["requests"]) {
    Request r;
    r.origin = static_cast<NodeId>(require_number(jr, "request", "origin"));
    r.destination = static_cast<NodeId>(require_number(jr, "request", "destination"));
    r.rate_per_h = require_number(jr, "request", "rate_per_h");
    if (r.origin == r.destination) {
      fail(ErrorCode::SchemaError, "request origin and destination must differ");
    }
    if (r.origin < 0 || r.origin >= s.network.node_count() || r.destination < 0 ||
        r.destination >= s.network.node_count() ||
        s.network.nodes[static_cast<size_t>(r.origin)].layer != Layer::Walk ||
        s.network.nodes[static_cast<size_t>(r.destination)].layer != Layer::Walk) {
      fail(ErrorCode::SchemaError, "request endpoints must be walking-layer nodes");
    }
    if (r.rate_per_h < 0.0) fail(ErrorCode::SchemaError, "request rate must be >= 0");
    if (r.rate_per_h == 0.0) {
      s.warnings.push_back("dropped zero-rate request " + std::to_string(r.origin) + " -> " +
                           std::to_string(r.destination));
      continue;
    }
    s.requests.push_back(r);
  }

  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json doc;
  doc["meta"] = {{"schema", "iamod-scenario-v1"},
                 {"label", s.label},
                 {"road_capacity_factor", s.road_capacity_factor}};

  json nodes = json::array();
  for (const Node& node : s.network.nodes) {
    json jn{{"id", node.id}, {"layer", to_string(node.layer)}};
    if (node.position) {
      jn["x_m"] = (*node.position)[0];
      jn["y_m"] = (*node.position)[1];
    }
    nodes.push_back(jn);
  }
  doc["nodes"] = nodes;

  json arcs = json::array();
  for (const Arc& arc : s.network.arcs) {
    json ja{{"tail", arc.tail},
            {"head", arc.head},
            {"kind", to_string(arc.kind)},
            {"time_s", arc.time_s},
            {"distance_m", arc.distance_m}};
    if (arc.capacity_per_h) ja["capacity_per_h"] = *arc.capacity_per_h;
    arcs.push_back(ja);
  }
  doc["arcs"] = arcs;

  json requests = json::array();
  for (const Request& r : s.requests) {
    requests.push_back(
        {{"origin", r.origin}, {"destination", r.destination}, {"rate_per_h", r.rate_per_h}});
  }
  doc["requests"] = requests;

  doc["costs"] = {{"value_of_time", tagged(s.costs.value_of_time, "usd_per_hour")},
                  {"amod_distance_cost", tagged(s.costs.amod_distance_cost, "usd_per_mile")},
                  {"energy_cost", tagged(s.costs.energy_cost, "usd_per_kwh")},
                  {"transit_distance_cost", tagged(s.costs.transit_distance_cost, "usd_per_mile")},
                  {"regularization", tagged(s.costs.regularization, "usd_per_flow_sq")},
                  {"carbon_intensity", tagged(s.costs.carbon_intensity, "kg_per_kwh")}};
  doc["vehicle"] = {{"air_density_kg_m3", s.vehicle.air_density},
                    {"drag_area_m2", s.vehicle.drag_area},
                    {"rolling_coeff", s.vehicle.rolling_coeff},
                    {"mass_kg", s.vehicle.mass},
                    {"efficiency", s.vehicle.efficiency}};

  return doc.dump(2) + "\n";
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::SchemaError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scenario_from_json(buffer.str());
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::SchemaError, "cannot open " + path.string() + " for writing");
  out << scenario_to_json(s);
}

Scenario scale_road_capacity(Scenario s, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) {
    fail(ErrorCode::BadArgument, "capacity fraction must be in [0, 1]");
  }
  s.road_capacity_factor *= fraction;
  return s;
}

Scenario zero_transit_capacity(Scenario s) {
  for (int a : s.network.transit_arcs) {
    s.network.arcs[static_cast<size_t>(a)].capacity_per_h = 0.0;
  }
  return s;
}

namespace {

// Deterministic uniform double in [lo, hi) from a seeded engine.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

}  // namespace

Scenario grid_scenario(const GridSpec& spec, std::uint64_t demand_seed) {
  if (spec.rows < 2 || spec.cols < 2) fail(ErrorCode::BadSpec, "grid needs rows, cols >= 2");
  if (spec.block_m <= 0.0) fail(ErrorCode::BadSpec, "block size must be > 0");
  if (spec.n_requests < 1) fail(ErrorCode::BadSpec, "need at least one request");

  Scenario s;
  s.label = "grid-" + std::to_string(spec.rows) + "x" + std::to_string(spec.cols) + "-seed" +
            std::to_string(demand_seed);

  std::vector<Node> nodes;
  std::vector<Arc> arcs;

  const int n_grid = spec.rows * spec.cols;
  auto grid_id = [&](int r, int c) { return r * spec.cols + c; };
  auto pos = [&](int r, int c) {
    return std::array<double, 2>{c * spec.block_m, r * spec.block_m};
  };

  // Walk layer: ids [0, n_grid), bidirectional grid.
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      nodes.push_back({grid_id(r, c), Layer::Walk, pos(r, c)});
    }
  }
  // Road layer: ids [n_grid, 2 n_grid), same topology as one-way pairs.
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      nodes.push_back({n_grid + grid_id(r, c), Layer::Road, pos(r, c)});
    }
  }

  const double walk_time = spec.block_m / spec.walk_speed_mps;
  const double road_time = spec.block_m / spec.road_speed_mps;
  const double road_cap = spec.road_capacity_coeff * spec.lanes * spec.road_speed_mps;

  auto add_pair = [&](NodeId a, NodeId b, ArcKind kind, double time_s, double dist,
                      std::optional<double> cap) {
    arcs.push_back({a, b, kind, time_s, dist, cap, std::nullopt});
    arcs.push_back({b, a, kind, time_s, dist, cap, std::nullopt});
  };

  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      if (c + 1 < spec.cols) {
        add_pair(grid_id(r, c), grid_id(r, c + 1), ArcKind::Walk, walk_time, spec.block_m, {});
        add_pair(n_grid + grid_id(r, c), n_grid + grid_id(r, c + 1), ArcKind::Road, road_time,
                 spec.block_m, road_cap);
      }
      if (r + 1 < spec.rows) {
        add_pair(grid_id(r, c), grid_id(r + 1, c), ArcKind::Walk, walk_time, spec.block_m, {});
        add_pair(n_grid + grid_id(r, c), n_grid + grid_id(r + 1, c), ArcKind::Road, road_time,
                 spec.block_m, road_cap);
      }
    }
  }

  // Switch arcs between colocated walk and road nodes. Hailing a vehicle takes
  // longer than leaving one.
  constexpr double kSwitchDistance = 10.0;
  for (int g = 0; g < n_grid; ++g) {
    arcs.push_back({static_cast<NodeId>(g), static_cast<NodeId>(n_grid + g), ArcKind::Switch,
                    120.0, kSwitchDistance, {}, {}});
    arcs.push_back({static_cast<NodeId>(n_grid + g), static_cast<NodeId>(g), ArcKind::Switch,
                    60.0, kSwitchDistance, {}, {}});
  }

  // Transit lines: dedicated stop nodes every `stop_every` blocks along a row
  // or column, consecutive stops linked in both directions. Boarding time is
  // one minute plus half the line's headway; alighting is one minute.
  std::vector<TransitLine> lines = spec.lines;
  if (lines.empty()) {
    lines.push_back({true, spec.rows / 2, 2, 600.0});
    lines.push_back({false, spec.cols / 2, 2, 600.0});
  }

  NodeId next_id = static_cast<NodeId>(2 * n_grid);
  for (const TransitLine& line : lines) {
    if (line.stop_every < 1) fail(ErrorCode::BadSpec, "transit stop spacing must be >= 1");
    const int extent = line.horizontal ? spec.cols : spec.rows;
    const int fixed = line.index;
    if (fixed < 0 || fixed >= (line.horizontal ? spec.rows : spec.cols)) {
      fail(ErrorCode::BadSpec, "transit line index outside the grid");
    }
    std::vector<std::pair<NodeId, int>> stops;  // (stop node id, grid position along line)
    for (int k = 0; k < extent; k += line.stop_every) {
      const int r = line.horizontal ? fixed : k;
      const int c = line.horizontal ? k : fixed;
      nodes.push_back({next_id, Layer::Transit, pos(r, c)});
      stops.push_back({next_id, k});
      const NodeId walk = static_cast<NodeId>(grid_id(r, c));
      arcs.push_back({walk, next_id, ArcKind::Switch, 60.0 + line.headway_s / 2.0,
                      kSwitchDistance, {}, {}});
      arcs.push_back({next_id, walk, ArcKind::Switch, 60.0, kSwitchDistance, {}, {}});
      ++next_id;
    }
    for (size_t i = 0; i + 1 < stops.size(); ++i) {
      const double dist = (stops[i + 1].second - stops[i].second) * spec.block_m;
      const double time = dist / spec.transit_speed_mps;
      add_pair(stops[i].first, stops[i + 1].first, ArcKind::Transit, time, dist,
               spec.transit_capacity_per_h);
    }
  }

  s.network = build_network(std::move(nodes), std::move(arcs), s.vehicle);

  std::mt19937_64 rng(demand_seed);
  for (int i = 0; i < spec.n_requests; ++i) {
    const int origin = static_cast<int>(rng() % static_cast<std::uint64_t>(n_grid));
    int destination = origin;
    while (destination == origin) {
      destination = static_cast<int>(rng() % static_cast<std::uint64_t>(n_grid));
    }
    const double rate = uniform(rng, spec.demand_rate_lo, spec.demand_rate_hi);
    s.requests.push_back({static_cast<NodeId>(origin), static_cast<NodeId>(destination), rate});
  }

  return s;
}

Scenario grid_scenario(int rows, int cols, double block_m, const std::vector<TransitLine>& lines,
                       std::uint64_t demand_seed) {
  GridSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.block_m = block_m;
  spec.lines = lines;
  return grid_scenario(spec, demand_seed);
}

std::uint64_t content_hash(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t scenario_hash(const Scenario& s) { return content_hash(scenario_to_json(s)); }

}  // namespace iamod
