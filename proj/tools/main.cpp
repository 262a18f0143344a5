// iamod: scenario generation, social-optimum solving, pricing, equilibrium
// verification and capacity sweeps over intermodal mobility-on-demand
// networks. Artifacts are plain JSON/CSV files chained by content hashes so
// every result can be replayed and audited offline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iamod/equilibrium.hpp"
#include "iamod/errors.hpp"
#include "iamod/io.hpp"
#include "iamod/metrics.hpp"
#include "iamod/pricing.hpp"
#include "iamod/qpmodel.hpp"
#include "iamod/qpsolver.hpp"
#include "iamod/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitVerifyFailed = 3;
constexpr int kExitNumerical = 4;

struct CommonSolveFlags {
  double tol = 1e-8;
  int max_iter = 200;
  std::uint64_t seed = 0;

  iamod::SolverOptions options() const {
    iamod::SolverOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    o.seed = seed;
    return o;
  }
};

void add_solver_flags(CLI::App* cmd, CommonSolveFlags& flags) {
  cmd->add_option("--tol", flags.tol, "Solver tolerance (scaled residuals and relative gap)");
  cmd->add_option("--max-iter", flags.max_iter, "Interior-point iteration cap");
  cmd->add_option("--seed", flags.seed, "Starting-point randomization seed");
}

iamod::Scenario load_checked(const std::string& path) {
  iamod::Scenario s = iamod::load_scenario(path);
  for (const std::string& warning : s.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  return s;
}

std::uint64_t canonical_hash(const iamod::Scenario& s) { return iamod::scenario_hash(s); }

int solve_status_exit(iamod::SolveStatus status) {
  switch (status) {
    case iamod::SolveStatus::Optimal: return kExitOk;
    case iamod::SolveStatus::Infeasible: return kExitInfeasible;
    case iamod::SolveStatus::IterationLimit: return kExitNumerical;
  }
  return kExitNumerical;
}

std::vector<iamod::SystemVariant> parse_variants(const std::vector<std::string>& names) {
  std::vector<iamod::SystemVariant> variants;
  for (const std::string& name : names) {
    if (name == "iamod") {
      variants.push_back(iamod::SystemVariant::IAMoD);
    } else if (name == "amod") {
      variants.push_back(iamod::SystemVariant::AMoDOnly);
    } else {
      throw CLI::ValidationError("--variants", "unknown variant '" + name + "'");
    }
  }
  return variants;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intermodal AMoD network-flow optimization, pricing and verification"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "Write a synthetic grid scenario");
  iamod::GridSpec grid;
  std::uint64_t demand_seed = 0;
  std::string generate_out;
  generate->add_option("--rows", grid.rows, "Grid rows")->check(CLI::Range(2, 64));
  generate->add_option("--cols", grid.cols, "Grid columns")->check(CLI::Range(2, 64));
  generate->add_option("--block", grid.block_m, "Block length in meters");
  generate->add_option("--requests", grid.n_requests, "Number of travel requests");
  generate->add_option("--seed", demand_seed, "Demand seed");
  double headway_s = 600.0;
  int stop_every = 2;
  generate->add_option("--transit-headway", headway_s, "Transit line headway in seconds");
  generate->add_option("--transit-stop-every", stop_every, "Blocks between transit stops");
  generate->add_option("--capacity-coeff", grid.road_capacity_coeff,
                       "Road capacity per lane per (m/s) of speed limit");
  generate->add_option("--transit-capacity", grid.transit_capacity_per_h,
                       "Transit arc capacity (customers/h)");
  generate->add_option("--out", generate_out, "Output scenario path")->required();

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "Solve the social optimum");
  std::string solve_scenario, solve_out, solve_dump;
  CommonSolveFlags solve_flags;
  solve_cmd->add_option("--scenario", solve_scenario, "Scenario file")->required();
  solve_cmd->add_option("--out", solve_out, "Output solution path")->required();
  solve_cmd->add_option("--dump-qp", solve_dump,
                        "Write the assembled program as sparse triplets for external checks");
  add_solver_flags(solve_cmd, solve_flags);

  // price
  auto* price = app.add_subcommand("price", "Derive the pricing-and-tolling schedule");
  std::string price_scenario, price_solution, price_out, price_csv;
  bool stability_probe = false;
  price->add_option("--scenario", price_scenario, "Scenario file")->required();
  price->add_option("--solution", price_solution, "Solution file")->required();
  price->add_option("--out", price_out, "Output prices path")->required();
  price->add_option("--csv", price_csv, "Optional CSV export path");
  price->add_flag("--stability-probe", stability_probe,
                  "Re-solve with shifted seeds and flag dual degeneracy");

  // verify
  auto* verify = app.add_subcommand("verify", "Check the market-equilibrium property");
  std::string verify_scenario, verify_solution, verify_prices, verify_out;
  double verify_tol = 1e-4;
  int verify_jobs = 0;
  CommonSolveFlags verify_flags;
  verify->add_option("--scenario", verify_scenario, "Scenario file")->required();
  verify->add_option("--solution", verify_solution, "Solution file")->required();
  verify->add_option("--prices", verify_prices, "Prices file")->required();
  verify->add_option("--out", verify_out, "Output report path");
  verify->add_option("--flow-tol", verify_tol, "Relative flow-deviation tolerance");
  verify->add_option("--jobs", verify_jobs, "Best-response parallelism (0 = all cores)");
  add_solver_flags(verify, verify_flags);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Capacity-scaling study");
  std::string sweep_scenario, sweep_out, sweep_json;
  std::vector<double> fractions;
  std::vector<std::string> variant_names{"iamod", "amod"};
  bool no_verify = false;
  bool include_reg = false;
  int sweep_jobs = 0;
  CommonSolveFlags sweep_flags;
  sweep_cmd->add_option("--scenario", sweep_scenario, "Scenario file")->required();
  sweep_cmd->add_option("--fractions", fractions, "Road capacity fractions")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--variants", variant_names, "Variants: iamod, amod")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "Output CSV path")->required();
  sweep_cmd->add_option("--json", sweep_json, "Optional JSON table path");
  sweep_cmd->add_flag("--no-verify", no_verify, "Skip per-point equilibrium verification");
  sweep_cmd->add_flag("--include-regularization", include_reg,
                      "Include the regularization term in reported monetary cost");
  sweep_cmd->add_option("--jobs", sweep_jobs, "Sweep parallelism (0 = all cores)");
  add_solver_flags(sweep_cmd, sweep_flags);

  // report
  auto* report_cmd = app.add_subcommand("report", "Render summaries from saved artifacts");
  std::string report_scenario, report_solution, report_prices, report_table, report_out;
  report_cmd->add_option("--scenario", report_scenario, "Scenario file");
  report_cmd->add_option("--solution", report_solution, "Solution file");
  report_cmd->add_option("--prices", report_prices, "Prices file");
  report_cmd->add_option("--table", report_table, "Sweep table (JSON)");
  report_cmd->add_option("--out", report_out, "Write the rendered report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) {
      if (grid.lines.empty()) {
        grid.lines.push_back({true, grid.rows / 2, stop_every, headway_s});
        grid.lines.push_back({false, grid.cols / 2, stop_every, headway_s});
      }
      iamod::Scenario s = iamod::grid_scenario(grid, demand_seed);
      iamod::save_scenario(s, generate_out);
      std::cout << "wrote " << generate_out << " (" << s.network.node_count() << " nodes, "
                << s.network.arc_count() << " arcs, " << s.requests.size() << " requests)\n";
      return kExitOk;
    }

    if (solve_cmd->parsed()) {
      iamod::Scenario s = load_checked(solve_scenario);
      auto [qp, idx] = iamod::assemble(s);
      if (!solve_dump.empty()) iamod::write_file(solve_dump, iamod::qp_debug_dump(qp));
      iamod::SolutionArtifact artifact;
      artifact.options = solve_flags.options();
      artifact.scenario_hash = canonical_hash(s);
      artifact.result = iamod::solve(qp, artifact.options);
      if (artifact.result.status != iamod::SolveStatus::Optimal) {
        std::cerr << "solve: " << to_string(artifact.result.status) << "\n";
        if (artifact.result.certificate) {
          std::cerr << "infeasibility certificate: b-combination "
                    << artifact.result.certificate->b_combination << "\n";
        }
        return solve_status_exit(artifact.result.status);
      }
      artifact.flows = iamod::extract_flows(s, idx, artifact.result.x);
      iamod::write_file(solve_out, iamod::solution_to_json(artifact));
      std::cout << "status optimal, objective " << artifact.flows.objective.total
                << " USD/h in " << artifact.result.iterations << " iterations\n";
      return kExitOk;
    }

    if (price->parsed()) {
      iamod::Scenario s = load_checked(price_scenario);
      const std::string solution_text = iamod::read_file(price_solution);
      iamod::SolutionArtifact sol = iamod::solution_from_json(solution_text, s);
      if (sol.scenario_hash != canonical_hash(s)) {
        std::cerr << "price: solution was produced from a different scenario\n";
        return kExitUsage;
      }
      iamod::PricesArtifact prices;
      prices.scenario_hash = sol.scenario_hash;
      prices.solution_hash = iamod::content_hash(solution_text);
      auto [qp, idx] = iamod::assemble(s);
      prices.prices = iamod::derive_prices(sol.result, s, idx);
      if (stability_probe) {
        iamod::DualStabilityProbe probe =
            iamod::dual_stability_probe(s, qp, idx, sol.options, 3);
        if (probe.degenerate) {
          std::cerr << "warning: dual variation " << probe.max_variation
                    << " across reruns; schedule is not canonical\n";
        }
      }
      iamod::write_file(price_out, iamod::prices_to_json(prices));
      if (!price_csv.empty()) {
        iamod::write_file(price_csv, iamod::prices_to_csv(prices.prices, s));
      }
      std::cout << "wrote " << price_out << "\n";
      return kExitOk;
    }

    if (verify->parsed()) {
      iamod::Scenario s = load_checked(verify_scenario);
      const std::string solution_text = iamod::read_file(verify_solution);
      iamod::SolutionArtifact sol = iamod::solution_from_json(solution_text, s);
      iamod::PricesArtifact prices = iamod::prices_from_json(iamod::read_file(verify_prices));
      const std::uint64_t hash = canonical_hash(s);
      if (sol.scenario_hash != hash || prices.scenario_hash != hash ||
          prices.solution_hash != iamod::content_hash(solution_text)) {
        std::cerr << "verify: artifact chain does not match (scenario/solution/prices)\n";
        return kExitUsage;
      }
      iamod::EquilibriumOptions opts;
      opts.flow_tol = verify_tol;
      opts.solver = verify_flags.options();
      opts.parallelism = verify_jobs;
      iamod::EquilibriumReport report =
          iamod::verify_equilibrium(s, sol.flows, sol.result, prices.prices, opts);
      const std::string rendered = iamod::equilibrium_report_to_json(report, hash);
      if (!verify_out.empty()) iamod::write_file(verify_out, rendered);
      std::cout << (report.pass ? "PASS" : "FAIL") << ": max request deviation "
                << report.max_request_deviation << ", rebalancing deviation "
                << report.rebalancing_deviation << ", stationarity "
                << std::max(report.customer_stationarity, report.operator_stationarity)
                << " (tol " << report.stationarity_tol_used << ")\n";
      return report.pass ? kExitOk : kExitVerifyFailed;
    }

    if (sweep_cmd->parsed()) {
      iamod::Scenario s = load_checked(sweep_scenario);
      iamod::SweepOptions opts;
      opts.fractions = fractions;
      opts.variants = parse_variants(variant_names);
      opts.solver = sweep_flags.options();
      opts.verify = !no_verify;
      opts.include_regularization = include_reg;
      opts.parallelism = sweep_jobs;
      iamod::SweepTable table = iamod::sweep(s, opts);
      iamod::write_file(sweep_out, iamod::sweep_to_csv(table));
      if (!sweep_json.empty()) iamod::write_file(sweep_json, iamod::sweep_to_json(table));
      int failures = 0;
      for (const iamod::SweepRow& row : table.rows) {
        if (!row.error.empty() || row.status != iamod::SolveStatus::Optimal) ++failures;
      }
      std::cout << "wrote " << sweep_out << " (" << table.rows.size() << " rows, " << failures
                << " failed points)\n";
      return kExitOk;
    }

    if (report_cmd->parsed()) {
      std::ostringstream out;
      out.precision(6);
      if (!report_table.empty()) {
        const nlohmann::json doc = nlohmann::json::parse(iamod::read_file(report_table));
        if (!doc.contains("rows")) {
          std::cerr << "report: --table expects a sweep JSON artifact\n";
          return kExitUsage;
        }
        char line[256];
        std::snprintf(line, sizeof(line), "%8s %-6s %-10s %9s %9s %9s %11s %12s %10s %8s\n",
                      "fraction", "system", "status", "road", "walk", "transit", "avg_time_s",
                      "cost_usd_h", "co2_kg_h", "toll_usd");
        out << line;
        for (const auto& row : doc["rows"]) {
          std::snprintf(line, sizeof(line),
                        "%8.3f %-6s %-10s %9.4f %9.4f %9.4f %11.1f %12.2f %10.3f %8.3f\n",
                        row.value("fraction", 0.0), row.value("variant", "?").c_str(),
                        row.value("status", "?").c_str(), row.value("share_road", 0.0),
                        row.value("share_walk", 0.0), row.value("share_transit", 0.0),
                        row.value("avg_travel_time_s", 0.0), row.value("monetary_cost_usd_h", 0.0),
                        row.value("emissions_kg_h", 0.0), row.value("avg_toll_per_trip_usd", 0.0));
          out << line;
        }
      } else {
        if (report_scenario.empty() || report_solution.empty()) {
          std::cerr << "report: need --scenario and --solution (or --table)\n";
          return kExitUsage;
        }
        iamod::Scenario s = load_checked(report_scenario);
        const std::string solution_text = iamod::read_file(report_solution);
        iamod::SolutionArtifact sol = iamod::solution_from_json(solution_text, s);
        const std::uint64_t hash = canonical_hash(s);
        if (sol.scenario_hash != hash) {
          std::cerr << "report: solution was produced from a different scenario\n";
          return kExitUsage;
        }
        out << "scenario       " << s.label << "\n";
        out << "status         " << to_string(sol.result.status) << " ("
            << sol.result.iterations << " iterations)\n";
        out << "objective      " << sol.flows.objective.total << " USD/h\n";
        out << "  time         " << sol.flows.objective.time_cost << "\n";
        out << "  amod ops     " << sol.flows.objective.amod_operating_cost << "\n";
        out << "  transit ops  " << sol.flows.objective.transit_operating_cost << "\n";
        out << "  regularizer  " << sol.flows.objective.regularization << "\n";
        if (!report_prices.empty()) {
          iamod::PricesArtifact prices = iamod::prices_from_json(iamod::read_file(report_prices));
          if (prices.scenario_hash != hash ||
              prices.solution_hash != iamod::content_hash(solution_text)) {
            std::cerr << "report: prices do not match the solution chain\n";
            return kExitUsage;
          }
          iamod::ScenarioMetrics m = iamod::compute_metrics(s, sol.flows, prices.prices);
          out << "modal shares   road " << m.modal_share_road << ", walk " << m.modal_share_walk
              << ", transit " << m.modal_share_transit << "\n";
          out << "avg time       " << m.avg_travel_time_s << " s\n";
          out << "monetary cost  " << m.monetary_cost_usd_h << " USD/h\n";
          out << "emissions      " << m.emissions_kg_h << " kg/h\n";
          out << "fleet          " << m.fleet_size << " vehicles\n";
          out << "avg toll       " << m.avg_toll_per_trip_usd << " USD/trip\n";
        }
      }
      if (!report_out.empty()) {
        iamod::write_file(report_out, out.str());
      } else {
        std::cout << out.str();
      }
      return kExitOk;
    }
  } catch (const iamod::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case iamod::ErrorCode::NumericalBreakdown:
        return kExitNumerical;
      case iamod::ErrorCode::InfeasibleRebalancing:
        return kExitInfeasible;
      default:
        return kExitUsage;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  return kExitUsage;
}
