#include "iamod/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "iamod/errors.hpp"

namespace iamod {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LayerViolation: return "LayerViolation";
    case ErrorCode::MissingCapacity: return "MissingCapacity";
    case ErrorCode::NonPositiveTime: return "NonPositiveTime";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnitError: return "UnitError";
    case ErrorCode::EmptyDemand: return "EmptyDemand";
    case ErrorCode::OverflowRisk: return "OverflowRisk";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotOptimal: return "NotOptimal";
    case ErrorCode::MismatchedProvenance: return "MismatchedProvenance";
    case ErrorCode::UnboundedCustomerProblem: return "UnboundedCustomerProblem";
    case ErrorCode::InfeasibleRebalancing: return "InfeasibleRebalancing";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::BadArgument: return "BadArgument";
  }
  return "Error";
}

namespace {

using json = nlohmann::ordered_json;

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  int i = 0;
  for (const json& x : arr) v[i++] = x.get<double>();
  return v;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_from_hex(const std::string& hex) {
  return std::stoull(hex, nullptr, 16);
}

json residuals_to_json(const ResidualReport& r) {
  return json{{"primal_feas", r.primal_feas},   {"dual_feas", r.dual_feas},
              {"comp_slack", r.comp_slack},     {"duality_gap", r.duality_gap},
              {"scaled_primal", r.scaled_primal}, {"scaled_dual", r.scaled_dual},
              {"scaled_comp", r.scaled_comp}};
}

ResidualReport residuals_from_json(const json& j) {
  ResidualReport r;
  r.primal_feas = j.value("primal_feas", 0.0);
  r.dual_feas = j.value("dual_feas", 0.0);
  r.comp_slack = j.value("comp_slack", 0.0);
  r.duality_gap = j.value("duality_gap", 0.0);
  r.scaled_primal = j.value("scaled_primal", 0.0);
  r.scaled_dual = j.value("scaled_dual", 0.0);
  r.scaled_comp = j.value("scaled_comp", 0.0);
  return r;
}

SolveStatus status_from_string(const std::string& text) {
  if (text == "optimal") return SolveStatus::Optimal;
  if (text == "infeasible") return SolveStatus::Infeasible;
  return SolveStatus::IterationLimit;
}

}  // namespace

std::string solution_to_json(const SolutionArtifact& artifact) {
  json doc;
  doc["meta"] = {{"schema", "iamod-solution-v1"},
                 {"scenario_hash", hash_hex(artifact.scenario_hash)},
                 {"status", to_string(artifact.result.status)},
                 {"iterations", artifact.result.iterations},
                 {"polished", artifact.result.polished},
                 {"tol", artifact.options.tol},
                 {"max_iter", artifact.options.max_iter},
                 {"seed", artifact.options.seed}};
  doc["objective"] = {{"total_usd_h", artifact.flows.objective.total},
                      {"time_cost", artifact.flows.objective.time_cost},
                      {"amod_operating_cost", artifact.flows.objective.amod_operating_cost},
                      {"transit_operating_cost", artifact.flows.objective.transit_operating_cost},
                      {"regularization", artifact.flows.objective.regularization}};
  doc["residuals"] = residuals_to_json(artifact.result.residuals);

  json request_flows = json::array();
  for (const auto& f : artifact.flows.request_flows) request_flows.push_back(vector_to_json(f));
  doc["flows"] = {{"requests", request_flows},
                  {"rebalancing", vector_to_json(artifact.flows.rebalancing)}};
  doc["duals"] = {{"equality", vector_to_json(artifact.result.y)},
                  {"inequality", vector_to_json(artifact.result.z)},
                  {"bounds", vector_to_json(artifact.result.w)}};
  doc["primal"] = vector_to_json(artifact.result.x);
  return doc.dump(2) + "\n";
}

SolutionArtifact solution_from_json(const std::string& text, const Scenario& s) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::SchemaError, e.what());
  }
  if (!doc.contains("meta") || doc["meta"].value("schema", "") != "iamod-solution-v1") {
    fail(ErrorCode::SchemaError, "not a solution artifact");
  }

  SolutionArtifact artifact;
  artifact.scenario_hash = hash_from_hex(doc["meta"].value("scenario_hash", "0"));
  artifact.result.status = status_from_string(doc["meta"].value("status", ""));
  artifact.result.iterations = doc["meta"].value("iterations", 0);
  artifact.result.polished = doc["meta"].value("polished", false);
  artifact.options.tol = doc["meta"].value("tol", 1e-8);
  artifact.options.max_iter = doc["meta"].value("max_iter", 200);
  artifact.options.seed = doc["meta"].value("seed", std::uint64_t{0});
  artifact.result.residuals = residuals_from_json(doc.at("residuals"));
  artifact.result.x = vector_from_json(doc.at("primal"));
  artifact.result.y = vector_from_json(doc.at("duals").at("equality"));
  artifact.result.z = vector_from_json(doc.at("duals").at("inequality"));
  artifact.result.w = vector_from_json(doc.at("duals").at("bounds"));

  const auto [qp, idx] = assemble(s);
  if (artifact.result.x.size() != idx.columns()) {
    fail(ErrorCode::DimensionMismatch, "solution does not match the scenario dimensions");
  }
  artifact.flows = extract_flows(s, idx, artifact.result.x);
  artifact.result.objective = artifact.flows.objective.total;
  return artifact;
}

std::string prices_to_json(const PricesArtifact& artifact) {
  json doc;
  doc["meta"] = {{"schema", "iamod-prices-v1"},
                 {"scenario_hash", hash_hex(artifact.scenario_hash)},
                 {"solution_hash", hash_hex(artifact.solution_hash)},
                 {"provenance", hash_hex(artifact.prices.provenance)}};
  doc["transit_fares"] = vector_to_json(artifact.prices.transit_fares);
  doc["road_tolls"] = vector_to_json(artifact.prices.road_tolls);
  doc["amod_arc_charges"] = vector_to_json(artifact.prices.amod_arc_charges);
  doc["origin_charges"] = vector_to_json(artifact.prices.origin_charges);
  doc["destination_charges"] = vector_to_json(artifact.prices.destination_charges);
  return doc.dump(2) + "\n";
}

PricesArtifact prices_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::SchemaError, e.what());
  }
  if (!doc.contains("meta") || doc["meta"].value("schema", "") != "iamod-prices-v1") {
    fail(ErrorCode::SchemaError, "not a prices artifact");
  }
  PricesArtifact artifact;
  artifact.scenario_hash = hash_from_hex(doc["meta"].value("scenario_hash", "0"));
  artifact.solution_hash = hash_from_hex(doc["meta"].value("solution_hash", "0"));
  artifact.prices.provenance = hash_from_hex(doc["meta"].value("provenance", "0"));
  artifact.prices.transit_fares = vector_from_json(doc.at("transit_fares"));
  artifact.prices.road_tolls = vector_from_json(doc.at("road_tolls"));
  artifact.prices.amod_arc_charges = vector_from_json(doc.at("amod_arc_charges"));
  artifact.prices.origin_charges = vector_from_json(doc.at("origin_charges"));
  artifact.prices.destination_charges = vector_from_json(doc.at("destination_charges"));
  return artifact;
}

std::string equilibrium_report_to_json(const EquilibriumReport& report,
                                       std::uint64_t scenario_hash_value) {
  json doc;
  doc["meta"] = {{"schema", "iamod-equilibrium-v1"},
                 {"scenario_hash", hash_hex(scenario_hash_value)}};
  doc["pass"] = report.pass;
  doc["max_request_deviation"] = report.max_request_deviation;
  doc["rebalancing_deviation"] = report.rebalancing_deviation;
  doc["customer_stationarity"] = report.customer_stationarity;
  doc["operator_stationarity"] = report.operator_stationarity;
  doc["stationarity_tol_used"] = report.stationarity_tol_used;
  json per = json::array();
  for (const auto& row : report.per_request) {
    per.push_back({{"request", row.request},
                   {"max_deviation", row.max_deviation},
                   {"l2_deviation", row.l2_deviation}});
  }
  doc["per_request"] = per;
  doc["notes"] = report.notes;
  return doc.dump(2) + "\n";
}

std::string sweep_to_json(const SweepTable& table) {
  json doc;
  doc["meta"] = {{"schema", "iamod-sweep-v1"},
                 {"scenario_hash", hash_hex(table.scenario_provenance)}};
  json rows = json::array();
  for (const SweepRow& row : table.rows) {
    rows.push_back({{"fraction", row.fraction},
                    {"variant", to_string(row.variant)},
                    {"status", to_string(row.status)},
                    {"iterations", row.iterations},
                    {"verified", row.verified},
                    {"verify_deviation", row.verify_deviation},
                    {"objective_usd_h", row.objective_usd_h},
                    {"share_road", row.metrics.modal_share_road},
                    {"share_walk", row.metrics.modal_share_walk},
                    {"share_transit", row.metrics.modal_share_transit},
                    {"avg_travel_time_s", row.metrics.avg_travel_time_s},
                    {"monetary_cost_usd_h", row.metrics.monetary_cost_usd_h},
                    {"emissions_kg_h", row.metrics.emissions_kg_h},
                    {"fleet_size", row.metrics.fleet_size},
                    {"avg_toll_per_trip_usd", row.metrics.avg_toll_per_trip_usd},
                    {"error", row.error}});
  }
  doc["rows"] = rows;
  return doc.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::SchemaError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::SchemaError, "cannot open " + path.string() + " for writing");
  out << text;
}

}  // namespace iamod
