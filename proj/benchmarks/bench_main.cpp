#include <benchmark/benchmark.h>

#include "bridgeforge/adjoint.hpp"
#include "bridgeforge/integrator.hpp"
#include "bridgeforge/random.hpp"
#include "bridgeforge/scorenet.hpp"
#include "bridgeforge/training.hpp"

using namespace bridgeforge;

namespace {

void BM_SimulateOu(benchmark::State& state) {
  const auto model = make_ou(1.0, 1.0, static_cast<int>(state.range(0)));
  const TimeGrid grid(0.0, 1.0, 100);
  const Vector x0 = Vector::Ones(model.dim);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto batch = simulate(model, x0, grid, 1000, seed++);
    benchmark::DoNotOptimize(batch.log_weights.data());
  }
  state.SetItemsProcessed(state.iterations() * 1000 * 100);
}
BENCHMARK(BM_SimulateOu)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_SimulateAdjointCell(benchmark::State& state) {
  const auto adj = build_adjoint(make_cell_model(0.1), 0.0, 2.0);
  const TimeGrid grid(0.0, 2.0, 100);
  Vector y(2);
  y << 1.5, 0.2;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto batch = simulate_adjoint(adj, y, grid, 1000, seed++);
    benchmark::DoNotOptimize(batch.log_weights.data());
  }
  state.SetItemsProcessed(state.iterations() * 1000 * 100);
}
BENCHMARK(BM_SimulateAdjointCell)->Unit(benchmark::kMillisecond);

void BM_NetworkForward(benchmark::State& state) {
  NetworkArchitecture arch;
  const ScoreNetwork net(arch, 1);
  const Matrix inputs = Matrix::Random(arch.input_width(), state.range(0));
  for (auto _ : state) {
    Matrix out = net.forward(inputs);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NetworkForward)->Arg(64)->Arg(1024);

void BM_NetworkBackward(benchmark::State& state) {
  NetworkArchitecture arch;
  const ScoreNetwork net(arch, 1);
  const Matrix inputs = Matrix::Random(arch.input_width(), state.range(0));
  const Matrix upstream = Matrix::Ones(1, state.range(0));
  for (auto _ : state) {
    auto grads = net.backward(inputs, upstream);
    benchmark::DoNotOptimize(grads.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NetworkBackward)->Arg(64)->Arg(1024);

void BM_BatchLossOu(benchmark::State& state) {
  TrainConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  const auto model = make_ou(1.0, 1.0, 1);
  const auto adj = build_adjoint(model, 0.0, cfg.T);
  const TimeGrid grid(0.0, cfg.T, cfg.steps);
  const Vector y = Vector::Ones(1);
  const auto batch = simulate_adjoint(adj, y, grid, cfg.batch_size, 7);
  const Matrix endpoints = y.replicate(1, static_cast<Eigen::Index>(cfg.batch_size));
  const ScoreNetwork net(cfg.architecture(1), 3);
  for (auto _ : state) {
    auto result = batch_loss(net, model, batch, endpoints, cfg);
    benchmark::DoNotOptimize(result.loss);
  }
}
BENCHMARK(BM_BatchLossOu)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
