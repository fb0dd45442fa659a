#include <benchmark/benchmark.h>
#include <propel/dsl.hpp>
#include <propel/rng.hpp>

using namespace propel;

namespace {

const char* kPrior =
    "(if 0 0.8 (if 2 0.0 (if 2 -6.0 (const 0.1) (const -0.55)) "
    "(if 2 6.0 (const 0.55) (const -0.1))) (affine (0.0 -5.5 -1.0) 0.0))";

void BM_parse(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(parse(kPrior));
  state.SetItemsProcessed(state.iterations());
}

void BM_eval_step(benchmark::State& state) {
  Program prog = parse(kPrior);
  ProgState st = make_state(prog);
  Vec obs(3);
  obs << 0.4, -0.9, 2.0;
  for (auto _ : state) benchmark::DoNotOptimize(eval_step(prog, st, obs, 0.05));
  state.SetItemsProcessed(state.iterations());
}

void BM_fit_tree(benchmark::State& state) {
  const int n = (int)state.range(0);
  Eigen::MatrixXd X(n, 3), Y(n, 1);
  Rng rng = make_rng(5);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = uni(rng);
    Y(i, 0) = std::sin(3 * X(i, 0)) + 0.3 * X(i, 1);
  }
  ClassConfig cfg;
  cfg.kind = ClassKind::tree;
  cfg.max_depth = 6;
  for (auto _ : state) benchmark::DoNotOptimize(fit_tree(X, Y, cfg));
}

}  // namespace

BENCHMARK(BM_parse);
BENCHMARK(BM_eval_step);
BENCHMARK(BM_fit_tree)->Arg(1000)->Arg(4000);
