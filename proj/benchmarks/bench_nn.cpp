#include <benchmark/benchmark.h>
#include <propel/nn.hpp>

using namespace propel;

namespace {

NeuralParams bench_net(int in, int out) {
  Rng rng = make_rng(1);
  return make_mlp(in, {64, 64}, out, OutputKind::linear, rng);
}

void BM_nn_forward(benchmark::State& state) {
  NeuralParams p = bench_net(4, 1);
  Vec x = Vec::Constant(4, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(nn_forward(p, x));
  state.SetItemsProcessed(state.iterations());
}

void BM_nn_forward_backward(benchmark::State& state) {
  NeuralParams p = bench_net(4, 1);
  Vec x = Vec::Constant(4, 0.3);
  Vec up = Vec::Constant(1, 1.0);
  for (auto _ : state) {
    ForwardTrace trace;
    nn_forward_traced(p, x, &trace);
    NnGrads grads = NnGrads::zeros_like(p);
    benchmark::DoNotOptimize(nn_backward(p, x, trace, up, &grads));
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_adam_step(benchmark::State& state) {
  NeuralParams p = bench_net(4, 1);
  NnGrads grads = NnGrads::zeros_like(p);
  for (auto& g : grads.dW) g.setConstant(1e-3);
  AdamOptimizer opt(1e-3);
  for (auto _ : state) opt.step(&p, grads);
  state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_nn_forward);
BENCHMARK(BM_nn_forward_backward);
BENCHMARK(BM_adam_step);
