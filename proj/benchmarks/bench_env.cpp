#include <benchmark/benchmark.h>
#include <propel/env.hpp>

using namespace propel;

namespace {

void BM_env_step(benchmark::State& state, const char* name) {
  Env env = Env::make(name, 0);
  Vec action = Vec::Zero(env.spec().act_dim);
  for (auto _ : state) {
    if (env.done()) env.reset();
    benchmark::DoNotOptimize(env.step(action));
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_track_frame(benchmark::State& state) {
  TrackSpec track = TrackSpec::default_oval();
  double x = 3.0, y = 9.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(track_frame(track, x, y));
    x += 0.01;
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_env_step, pendulum, "pendulum");
BENCHMARK_CAPTURE(BM_env_step, mountain_car, "mountain_car");
BENCHMARK_CAPTURE(BM_env_step, track, "track");
BENCHMARK(BM_track_frame);
