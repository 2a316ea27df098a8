#include <benchmark/benchmark.h>

#include "fairgen/diffusion.hpp"
#include "fairgen/fgw.hpp"
#include "fairgen/random.hpp"
#include "fairgen/transport.hpp"

using namespace fairgen;

namespace {

Graph sbm(std::size_t n) {
  std::vector<std::size_t> counts{n / 2, n - n / 2};
  return sbm_generate(counts, {{0.3, 0.05}, {0.05, 0.3}}, std::vector<int>{4, 4}, 1);
}

void BM_Assignment(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  Rng rng(1);
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(c).cost);
}
BENCHMARK(BM_Assignment)->Arg(50)->Arg(100)->Arg(200);

void BM_Transport(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  Rng rng(2);
  Eigen::MatrixXd c(n, n);
  Eigen::VectorXd h(n), g(n);
  for (int i = 0; i < n; ++i) {
    h(i) = rng.uniform() + 0.1;
    g(i) = rng.uniform() + 0.1;
    for (int j = 0; j < n; ++j) c(i, j) = rng.uniform();
  }
  h /= h.sum();
  g /= g.sum();
  for (auto _ : state) benchmark::DoNotOptimize(solve_transport(c, h, g).cost);
}
BENCHMARK(BM_Transport)->Arg(20)->Arg(50);

void BM_FGW(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Graph a = sbm(n);
  const auto sched = NoiseSchedule::linear(3, estimate_marginals(a));
  const Graph b = generate(Denoiser::oracle(a), sched, n, 2);
  const auto p = FGWProblem::between(a, b);
  for (auto _ : state) benchmark::DoNotOptimize(fgw_distance(p, {1e-9, 100, FGWInit::kBest, 0, 0}).objective);
}
BENCHMARK(BM_FGW)->Arg(50)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Graph g = sbm(n);
  const auto sched = NoiseSchedule::linear(3, estimate_marginals(g));
  const auto d = train_denoiser(g, sched, {100, 0.05}, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate(d, sched, n, ++seed).n_edges());
}
BENCHMARK(BM_Generate)->Arg(100)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
