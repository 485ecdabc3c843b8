#include <benchmark/benchmark.h>

#include "latreg/cloud.hpp"
#include "latreg/degrade.hpp"
#include "latreg/random.hpp"

using namespace latreg;

namespace {

PointCloud random_cloud(int k, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c(k, 3);
  for (int i = 0; i < k; ++i) {
    c.row(i) << rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1);
  }
  return c;
}

}  // namespace

static void BM_NnIndexBuild(benchmark::State& state) {
  const auto cloud = random_cloud(static_cast<int>(state.range(0)), 7);
  for (auto _ : state) {
    NnIndex index(cloud);
    benchmark::DoNotOptimize(index.size());
  }
}
BENCHMARK(BM_NnIndexBuild)->Arg(512)->Arg(1024);

static void BM_Chamfer(benchmark::State& state) {
  const auto a = random_cloud(static_cast<int>(state.range(0)), 11);
  const auto b = random_cloud(static_cast<int>(state.range(0)), 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(chamfer(a, b));
  }
}
BENCHMARK(BM_Chamfer)->Arg(512)->Arg(1024);

static void BM_DensityStddev(benchmark::State& state) {
  const auto cloud = random_cloud(static_cast<int>(state.range(0)), 17);
  for (auto _ : state) {
    benchmark::DoNotOptimize(density_stddev(cloud, 0.1));
  }
}
BENCHMARK(BM_DensityStddev)->Arg(512);
