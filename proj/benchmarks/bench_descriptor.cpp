#include <benchmark/benchmark.h>

#include "latreg/degrade.hpp"
#include "latreg/descriptor.hpp"

using namespace latreg;

namespace {

struct Fixture {
  DescriptorModel model;
  PointCloud cloud;

  Fixture() {
    Rng rng(3);
    model = init_model(ModelShape{}, rng);
    cloud = make_shape("three-prong", 1024, rng);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_Encode(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode(f.model, f.cloud).sum());
  }
}
BENCHMARK(BM_Encode);

static void BM_Decode(benchmark::State& state) {
  auto& f = fixture();
  const Eigen::VectorXd z = encode(f.model, f.cloud);
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode(f.model, z).sum());
  }
}
BENCHMARK(BM_Decode);

static void BM_EncodeBackward(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    Tape tape;
    const auto pts = tape.param(f.cloud);
    const auto latent = tape_encode(tape, f.model, pts);
    const auto loss = tape.sum(latent);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(pts).sum());
  }
}
BENCHMARK(BM_EncodeBackward);
