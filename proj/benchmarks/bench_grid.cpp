#include <benchmark/benchmark.h>

#include "latreg/parallel.hpp"
#include "latreg/registration.hpp"

using namespace latreg;

static void BM_GridBuild(benchmark::State& state) {
  const int l_count = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_rotation_grid(l_count, 16).size());
  }
}
BENCHMARK(BM_GridBuild)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_RelativeAngle(benchmark::State& state) {
  Rng rng(5);
  const Rotation a = sample_uniform_rotation(rng);
  const Rotation b = sample_uniform_rotation(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(relative_angle(a, b));
  }
}
BENCHMARK(BM_RelativeAngle);

int main(int argc, char** argv) {
  latreg::tune_allocator();
  ::benchmark::Initialize(&argc, argv);
  if (::benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  ::benchmark::RunSpecifiedBenchmarks();
  return 0;
}
