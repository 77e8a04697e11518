#include <benchmark/benchmark.h>

#include "lpa/synthroom.hpp"

namespace {

using namespace lpa;

void BM_SampleScene(benchmark::State& state) {
  SynthConfig priors;
  priors.image_size = 32;
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(i++);
    benchmark::DoNotOptimize(sample_scene(rng, priors));
  }
}
BENCHMARK(BM_SampleScene);

void BM_OracleRender(benchmark::State& state) {
  SynthConfig priors;
  priors.image_size = 32;
  Rng rng(7);
  const SceneSpec scene = sample_scene(rng, priors);
  Rng crng(8);
  const GlobalCamera cam = sample_dataset_camera(scene, crng, priors);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_oracle(scene, cam, n, n));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_OracleRender)->Arg(32)->Arg(64);

}  // namespace
