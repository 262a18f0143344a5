#include <benchmark/benchmark.h>

#include "iamod/equilibrium.hpp"
#include "iamod/metrics.hpp"
#include "iamod/pricing.hpp"
#include "iamod/qpmodel.hpp"
#include "iamod/qpsolver.hpp"
#include "iamod/scenario.hpp"

namespace {

iamod::Scenario grid_of(int side, int requests, double fraction) {
  iamod::GridSpec spec;
  spec.rows = side;
  spec.cols = side;
  spec.n_requests = requests;
  return iamod::scale_road_capacity(iamod::grid_scenario(spec, 12345), fraction);
}

void BM_Assemble(benchmark::State& state) {
  const iamod::Scenario s = grid_of(static_cast<int>(state.range(0)), 10, 0.06);
  for (auto _ : state) {
    auto built = iamod::assemble(s);
    benchmark::DoNotOptimize(built);
  }
}
BENCHMARK(BM_Assemble)->Arg(3)->Arg(4)->Arg(5)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_Solve(benchmark::State& state) {
  const iamod::Scenario s = grid_of(static_cast<int>(state.range(0)), 10, 0.06);
  auto [qp, idx] = iamod::assemble(s);
  for (auto _ : state) {
    iamod::SolveResult r = iamod::solve(qp);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_Solve)->Arg(3)->Arg(4)->Arg(5)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_DerivePrices(benchmark::State& state) {
  const iamod::Scenario s = grid_of(4, 10, 0.06);
  auto [qp, idx] = iamod::assemble(s);
  const iamod::SolveResult r = iamod::solve(qp);
  for (auto _ : state) {
    iamod::PriceSchedule p = iamod::derive_prices(r, s, idx);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_DerivePrices)->Unit(benchmark::kMicrosecond);

void BM_CustomerBestResponse(benchmark::State& state) {
  const iamod::Scenario s = grid_of(4, 10, 0.06);
  auto [qp, idx] = iamod::assemble(s);
  const iamod::SolveResult r = iamod::solve(qp);
  const iamod::PriceSchedule prices = iamod::derive_prices(r, s, idx);
  for (auto _ : state) {
    Eigen::VectorXd f = iamod::customer_best_response(s, prices, 0);
    benchmark::DoNotOptimize(f);
  }
}
BENCHMARK(BM_CustomerBestResponse)->Unit(benchmark::kMillisecond);

void BM_VerifyEquilibrium(benchmark::State& state) {
  const iamod::Scenario s = grid_of(4, 8, 0.06);
  auto [qp, idx] = iamod::assemble(s);
  const iamod::SolveResult r = iamod::solve(qp);
  const iamod::FlowSolution flows = iamod::extract_flows(s, idx, r.x);
  const iamod::PriceSchedule prices = iamod::derive_prices(r, s, idx);
  for (auto _ : state) {
    iamod::EquilibriumReport rep = iamod::verify_equilibrium(s, flows, r, prices);
    benchmark::DoNotOptimize(rep);
  }
}
BENCHMARK(BM_VerifyEquilibrium)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
