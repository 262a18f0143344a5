#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "iamod/equilibrium.hpp"
#include "iamod/metrics.hpp"
#include "iamod/pricing.hpp"
#include "iamod/qpmodel.hpp"
#include "iamod/qpsolver.hpp"

namespace iamod {

// File artifacts for the solve -> price -> verify -> report pipeline. Every
// artifact embeds the content hash of the scenario it was derived from;
// consumers refuse mismatched chains.

struct SolutionArtifact {
  std::uint64_t scenario_hash = 0;
  SolveResult result;
  FlowSolution flows;
  SolverOptions options;
};

struct PricesArtifact {
  std::uint64_t scenario_hash = 0;
  std::uint64_t solution_hash = 0;
  PriceSchedule prices;
};

std::string solution_to_json(const SolutionArtifact& artifact);
SolutionArtifact solution_from_json(const std::string& text, const Scenario& s);

std::string prices_to_json(const PricesArtifact& artifact);
PricesArtifact prices_from_json(const std::string& text);

std::string equilibrium_report_to_json(const EquilibriumReport& report,
                                       std::uint64_t scenario_hash);

std::string sweep_to_json(const SweepTable& table);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace iamod
