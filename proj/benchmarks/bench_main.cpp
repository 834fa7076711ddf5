#include <benchmark/benchmark.h>

#include <vector>

#include "splab/envs.hpp"
#include "splab/gates.hpp"
#include "splab/lowrank.hpp"
#include "splab/network.hpp"
#include "splab/random.hpp"

namespace {

using namespace splab;

const std::vector<int> kCartPoleNet{4, 64, 160, 2};

Matrix random_batch(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_Forward(benchmark::State& state) {
  Network net = mlp_new(kCartPoleNet, Activation::relu, 1);
  const bool gated = state.range(1) != 0;
  if (gated) net.enable_gates(2.4);
  Rng rng(2);
  const Matrix x = random_batch(rng, static_cast<int>(state.range(0)), 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict(net, x, gated ? GateMode::sampled : GateMode::deterministic, &rng));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->ArgsProduct({{1, 64, 256}, {0, 1}});

void BM_ForwardBackward(benchmark::State& state) {
  Network net = mlp_new(kCartPoleNet, Activation::relu, 1);
  const bool gated = state.range(1) != 0;
  if (gated) net.enable_gates(2.4);
  Rng rng(3);
  const Matrix x = random_batch(rng, static_cast<int>(state.range(0)), 4);
  const Matrix g = random_batch(rng, static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    const ForwardCache cache = forward(net, x, gated ? GateMode::sampled : GateMode::deterministic, &rng);
    benchmark::DoNotOptimize(backward(net, cache, g));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{64, 256}, {0, 1}});

void BM_SampleGate(benchmark::State& state) {
  Rng rng(4);
  GateParams gp;
  gp.log_alpha = Eigen::ArrayXd::Constant(state.range(0), 2.4);
  Eigen::ArrayXd u(state.range(0));
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.open_uniform();
  for (auto _ : state) benchmark::DoNotOptimize(sample_gate(gp, u));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleGate)->Arg(10240);

void BM_Svd(benchmark::State& state) {
  Rng rng(5);
  const Matrix a = random_batch(rng, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(svd(a));
}
BENCHMARK(BM_Svd)->Args({32, 32})->Args({160, 64})->Unit(benchmark::kMillisecond);

void BM_DecomposeNetwork(benchmark::State& state) {
  Network net = mlp_new(kCartPoleNet, Activation::relu, 6);
  net.enable_gates(2.4);
  for (auto _ : state) benchmark::DoNotOptimize(decompose_network(net, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_DecomposeNetwork)->Arg(7)->Unit(benchmark::kMillisecond);

template <class E>
void BM_EnvStep(benchmark::State& state) {
  E env;
  Rng rng(7);
  std::uint64_t episode = 0;
  env.reset(episode);
  Vector a(1);
  for (auto _ : state) {
    a(0) = static_cast<double>(rng.index(static_cast<std::size_t>(env.spec().action.n)));
    if (env.step(a).done) env.reset(++episode);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnvStep<CartPole>);
BENCHMARK(BM_EnvStep<Acrobot>);

}  // namespace

BENCHMARK_MAIN();
