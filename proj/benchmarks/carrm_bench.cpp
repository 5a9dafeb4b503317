#include <benchmark/benchmark.h>

#include <carrm/dataset.hpp>
#include <carrm/gate.hpp>
#include <carrm/synth.hpp>
#include <carrm/two_step.hpp>

#include <vector>

using namespace carrm;

namespace {

std::vector<Menu> random_menus(std::size_t n, int max_support) {
  Rng rng(42);
  std::vector<Menu> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(make_menu("m" + std::to_string(i), random_lottery(rng, max_support, -50, 50),
                            random_lottery(rng, max_support, -50, 50), 0.5));
  return out;
}

Dataset synthetic(int cells) {
  SynthConfig sc;
  sc.oracle_features = false;
  sc.cells = cells;
  sc.menus_per_cell = 20;
  sc.n_trials = 50;
  sc.seed = 1;
  return generate_synthetic(random_truth(full_library(), kGateFeatureDim, RuleId::A1, 1.0, 0.5, 2), sc).dataset;
}

}  // namespace

static void BM_FsdCompare(benchmark::State& state) {
  const auto menus = random_menus(1024, static_cast<int>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& m = menus[i++ & 1023];
    benchmark::DoNotOptimize(fsd_compare(m.left, m.right));
  }
}
BENCHMARK(BM_FsdCompare)->Arg(2)->Arg(9);

static void BM_BuildRuleMatrix(benchmark::State& state) {
  const auto menus = random_menus(10000, 9);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_rule_matrix(menus, 0.0, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(menus.size()));
}
BENCHMARK(BM_BuildRuleMatrix)->Arg(1)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

static void BM_LossAndGradient(benchmark::State& state) {
  const auto ds = synthetic(static_cast<int>(state.range(0)) / 20);
  const auto batch = make_batch(build_rule_matrix(ds.menus), feature_matrix(ds), ds.targets(), full_library());
  const auto params = random_truth(full_library(), kGateFeatureDim, RuleId::A1, 0.5, 0.2, 3);
  Eigen::VectorXd ga;
  Eigen::MatrixXd gb;
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(params, batch, &ga, &gb));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_LossAndGradient)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

static void BM_CellQp(benchmark::State& state) {
  Rng rng(5);
  const auto rows = state.range(0);
  Eigen::MatrixXd H(rows, kNumRules);
  for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] = uniform01(rng) - 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(solve_cell_qp(H, 0));
}
BENCHMARK(BM_CellQp)->Arg(20)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
