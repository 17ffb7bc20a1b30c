// Serial reference versus OpenMP version of each lattice kernel.
//
//   bench_kernels [--benchmark_filter=...]
//
// Thread count follows OMP_NUM_THREADS.

#include <memory>

#include <benchmark/benchmark.h>

#include "disbayes/graph.hpp"
#include "disbayes/kernels.hpp"
#include "disbayes/rng.hpp"
#include "disbayes/surrogate.hpp"

using namespace disbayes;

namespace {

Mat lattice(int n) {
  Mat p(2, static_cast<Eigen::Index>(n) * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) p.col(iy * n + ix) << ix / (n - 1.0), iy / (n - 1.0);
  return p;
}

template <bool Parallel>
void consensus_mix(benchmark::State& state) {
  const int m = 8;
  const Eigen::Index cells = state.range(0);
  const Mat a = metropolis_weights(Topology::ring(m)).weights();
  CounterRng rng(1);
  Mat logw(cells, m);
  Mat add(cells, m);
  for (Eigen::Index i = 0; i < logw.size(); ++i) {
    logw.data()[i] = -5.0 * rng.uniform();
    add.data()[i] = rng.normal();
  }
  Mat out;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::consensus_mix_parallel(a, logw, add, out);
    } else {
      kernels::consensus_mix_serial(a, logw, add, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * cells);
}

template <bool Parallel>
void detection_loglik(benchmark::State& state) {
  const Mat points = lattice(static_cast<int>(state.range(0)));
  const DetectionModel model(Eigen::Vector2d(0.1, 0.1), 0.1);
  const Observation obs{0.5, {}};
  Vec out;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::loglik_on_grid_parallel(model, obs, points, out);
    } else {
      kernels::loglik_on_grid_serial(model, obs, points, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * points.cols());
}

// A logistic loss keeps every observation, so this is the costliest kernel per cell.
template <bool Parallel>
void logistic_loss(benchmark::State& state) {
  ModelSet models;
  for (int j = 0; j < 4; ++j) models.push_back(std::make_shared<LogisticModel>(2));
  const History h = generate_history(models, {Eigen::Vector2d(1.0, -0.5), {}}, 200, 3, 0);
  const auto losses =
      surrogate_losses(h, GraphSchedule::fixed(metropolis_weights(Topology::ring(4))), models, 200);
  const Mat points = lattice(static_cast<int>(state.range(0))).array() * 4.0 - 2.0;
  Vec out;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::loss_on_grid_parallel(losses[0], points, out);
    } else {
      kernels::loss_on_grid_serial(losses[0], points, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * points.cols());
}

}  // namespace

BENCHMARK(consensus_mix<false>)->Name("consensus_mix/serial")->Arg(10201)->Arg(160801);
BENCHMARK(consensus_mix<true>)->Name("consensus_mix/omp")->Arg(10201)->Arg(160801);
BENCHMARK(detection_loglik<false>)->Name("detection_loglik/serial")->Arg(101)->Arg(401);
BENCHMARK(detection_loglik<true>)->Name("detection_loglik/omp")->Arg(101)->Arg(401);
BENCHMARK(logistic_loss<false>)->Name("logistic_loss/serial")->Arg(51)->Arg(101);
BENCHMARK(logistic_loss<true>)->Name("logistic_loss/omp")->Arg(51)->Arg(101);

BENCHMARK_MAIN();
