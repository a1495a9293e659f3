#include <benchmark/benchmark.h>

#include "panelmmle/estimators.hpp"
#include "panelmmle/inference.hpp"
#include "panelmmle/limit_dist.hpp"
#include "panelmmle/monte_carlo.hpp"

namespace {

using namespace panelmmle;

DesignSpec make_spec(int t, int n, double rho) {
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = t;
  spec.n_units = n;
  spec.rho = rho;
  spec.sigma_mu2 = 1.0;
  spec.n_reps = 1;
  spec.seed = 12345;
  return spec;
}

void BM_GeneratePanel(benchmark::State& state) {
  const DesignSpec spec = make_spec(4, static_cast<int>(state.range(0)), 0.8);
  std::int64_t rep = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_panel(spec, rep++));
  }
}
BENCHMARK(BM_GeneratePanel)->Arg(100)->Arg(1000);

void BM_ConcentratedMmle(benchmark::State& state) {
  const DesignSpec spec = make_spec(4, static_cast<int>(state.range(0)), 0.95);
  std::vector<WithinMoments> moments;
  for (int rep = 0; rep < 32; ++rep) {
    moments.push_back(WithinMoments::compute(generate_panel(spec, rep)));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_mmle_c(moments[i++ % moments.size()]));
  }
}
BENCHMARK(BM_ConcentratedMmle)->Arg(100)->Arg(500);

void BM_ConcentratedScore(benchmark::State& state) {
  const DesignSpec spec = make_spec(9, 200, 0.9);
  const ConcentratedStats stats = concentrated_stats(generate_panel(spec, 0));
  double r = -1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(concentrated_score(stats, 9, r, 1));
    r += 1e-4;
    if (r > 1.4) r = -1.0;
  }
}
BENCHMARK(BM_ConcentratedScore);

void BM_QlmStatistic(benchmark::State& state) {
  const DesignSpec spec = make_spec(9, static_cast<int>(state.range(0)), 0.9);
  std::vector<PanelDataset> panels;
  for (int rep = 0; rep < 16; ++rep) panels.push_back(generate_panel(spec, rep));
  const Hypothesis h0 = Hypothesis::rho_equals(0.9, 0);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qlm_standard(panels[i++ % panels.size()], h0));
  }
}
BENCHMARK(BM_QlmStatistic)->Arg(100)->Arg(500);

void BM_LimitDraws(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(draw_unit_root_limit(4, 1.0, 0, state.range(0), 7));
  }
}
BENCHMARK(BM_LimitDraws)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
